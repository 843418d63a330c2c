"""Pulse-inversion tissue harmonic imaging with DAS, MV and eigenspace MV beamformers."""

from .beamformers import (
    beamform_image,
    compute_delays,
    das_output,
    diagonal_load,
    eibmv_weights,
    estimate_covariance,
    extract_delayed_aperture,
    mv_weights,
)
from .core import (
    BeamformedImage,
    BeamformerParams,
    RfChannelFrame,
    ScanGeometry,
    Scatterer,
    TransmitPulse,
    make_window,
)
from .errors import InvalidArgument, MeasurementFailure, NumericalFailure, ThimvError
from .metrics import QualityReport, RoiPair, contrast_ratio, contrast_to_noise, estimate_cyst_radius, lateral_fwhm
from .numerics import EigenDecomposition, eig_hermitian, envelope
from .pipeline import RunConfig, SweepPlan, compare_report, run_single, run_sweep
from .separation import PiPair, bandpass_2f0, pi_combine
from .simulator import NoiseSpec, Phantom, add_noise, make_cyst_phantom, make_point_phantom, synthesize_rf

__version__ = "0.1.0"
