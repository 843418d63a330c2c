import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thimv.core import (
    BeamformedImage,
    BeamformerParams,
    RfChannelFrame,
    ScanGeometry,
    Scatterer,
    TransmitPulse,
    make_window,
    transmit_time,
)
from thimv.errors import InvalidArgument


@pytest.mark.parametrize(
    "kind,length,expected",
    [
        ("rectangular", 4, [0.25, 0.25, 0.25, 0.25]),
        ("hamming", 1, [1.0]),
        ("hanning", 3, [0.0, 1.0, 0.0]),
    ],
)
def test_window_examples(kind, length, expected):
    np.testing.assert_allclose(make_window(kind, length), expected, atol=1e-15)


@given(st.sampled_from(["rectangular", "hanning", "hamming"]), st.integers(3, 200))
def test_window_unit_sum_nonnegative(kind, length):
    w = make_window(kind, length)
    assert w.shape == (length,)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= 0)


@pytest.mark.parametrize("length", [0, -1])
def test_window_rejects_empty(length):
    with pytest.raises(InvalidArgument):
        make_window("rectangular", length)


def test_window_rejects_unknown_kind():
    with pytest.raises(InvalidArgument):
        make_window("blackman", 5)


def test_reference_geometry(ref_geometry):
    g = ref_geometry
    assert g.n_elements == 132 and g.rx_aperture == 66 and g.n_scanlines == 64
    np.testing.assert_allclose(np.diff(g.element_x), 409e-6)
    assert abs(g.element_x.mean()) < 1e-15
    # scanline 32 sits on the array axis
    assert abs(g.scanline_x[32]) < 1e-12
    assert g.depths[0] == pytest.approx(20e-3)
    assert g.depths[-1] <= 70e-3 + 1e-12
    assert g.depths.size == 812


def test_geometry_time_axis_covers_depth_grid(ref_geometry):
    g = ref_geometry
    assert g.t0 <= 2 * g.depth_min / g.c0
    t_end = g.t0 + g.n_samples / g.fs
    far = np.hypot(g.depth_max, np.ptp(g.element_x))
    assert t_end > (g.depth_max + far) / g.c0


@pytest.mark.parametrize(
    "change",
    [
        {"pitch": 0.0},
        {"c0": -1.0},
        {"fs": 0.0},
        {"depth_min": 0.08},
        {"rx_aperture": 200},
        {"rx_aperture": 0},
        {"kerf": 1e-3},
    ],
)
def test_geometry_rejects_invalid(change):
    base = ScanGeometry.reference().to_dict()
    base.pop("t0")
    base.pop("n_samples")
    base.update(change)
    with pytest.raises(InvalidArgument):
        ScanGeometry.from_dict(base)


def test_geometry_rejects_uneven_pitch():
    x = np.array([0.0, 1e-3, 2.5e-3])
    with pytest.raises(InvalidArgument):
        ScanGeometry(x, 1e-3, 0.0, 1540.0, np.zeros(1), 0.02, 0.03, 50e6, 2)


def test_geometry_dict_roundtrip(ref_geometry):
    g2 = ScanGeometry.from_dict(ref_geometry.to_dict())
    assert g2.to_dict() == ref_geometry.to_dict()


def test_pulse_shape():
    p = TransmitPulse()
    assert p.n_taps == 51
    assert p.duration == pytest.approx(2 / 1.96e6)
    np.testing.assert_allclose(p.samples, p.samples[::-1], atol=1e-15)
    assert p.samples[25] == pytest.approx(1.0)


def test_pulse_polarity_negates_exactly():
    p = TransmitPulse()
    n = p.with_polarity(-1)
    assert np.array_equal(n.samples, -p.samples)


@pytest.mark.parametrize("kw", [{"polarity": 0}, {"f0": 0.0}, {"n_cycles": -1}, {"tx_focus_depth": 0.0}])
def test_pulse_rejects_invalid(kw):
    with pytest.raises(InvalidArgument):
        TransmitPulse(**kw)


def test_transmit_time_focus_and_axis():
    # on axis the virtual-source rule reduces to z / c0
    assert transmit_time(0.0, 0.03, 0.05, 1540.0) == pytest.approx(0.03 / 1540.0)
    assert transmit_time(0.0, 0.07, 0.05, 1540.0) == pytest.approx(0.07 / 1540.0)
    # at the focal depth, lateral offset delays the wavefront
    assert transmit_time(1e-3, 0.05, 0.05, 1540.0) == pytest.approx((0.05 + 1e-3) / 1540.0)


def test_frame_validation():
    with pytest.raises(InvalidArgument):
        RfChannelFrame(np.zeros(5), 50e6, 0.0, 1, 0)
    with pytest.raises(InvalidArgument):
        RfChannelFrame(np.zeros((2, 5)), 50e6, 0.0, 2, 0)
    f = RfChannelFrame(np.zeros((2, 5)), 50e6, 0.0, 1, 3)
    assert f.n_channels == 2 and f.n_samples == 5
    with pytest.raises(ValueError):
        f.data[0, 0] = 1.0


@pytest.mark.parametrize(
    "kw",
    [
        {"method": "LCMV"},
        {"window": "kaiser"},
        {"K": -1},
        {"L": 0},
        {"delta_load": -1e-3},
        {"delta_sub": 1.5},
        {"K": 2.5},
    ],
)
def test_params_rejects_invalid(kw):
    with pytest.raises(InvalidArgument):
        BeamformerParams(**kw)


def test_params_rejects_L_above_aperture(ref_geometry):
    with pytest.raises(InvalidArgument):
        BeamformerParams(L=67).check_geometry(ref_geometry)
    BeamformerParams(method="DAS", L=67).check_geometry(ref_geometry)


def test_scatterer_validation():
    with pytest.raises(InvalidArgument):
        Scatterer(0.0, 0.03, amplitude=1.5)
    with pytest.raises(InvalidArgument):
        Scatterer(0.0, 0.03, harmonic_coeff=-0.1)


def test_image_db_properties():
    v = np.array([[1.0, 0.5, 0.0], [0.25, 2.0, 1e-6]])
    img = BeamformedImage(v, np.array([0.0, 1.0]), np.array([0.0, 1.0, 2.0]), dynamic_range_db=50)
    assert img.db.max() == 0.0
    assert np.all(img.db <= 0) and img.db.min() == -50.0
    assert img.db_unclamped[1, 2] == pytest.approx(20 * np.log10(0.5e-6))
    assert np.isfinite(img.db_unclamped).all()


def test_image_rejects_bad_guard():
    with pytest.raises(InvalidArgument):
        BeamformedImage(np.ones((2, 4)), np.zeros(2), np.arange(4.0), guard=2)
