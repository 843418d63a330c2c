"""Domain records shared by the simulator, beamformers, metrics and pipeline.

All records are frozen dataclasses; array fields are stored as read-only
numpy arrays so instances can be shared between worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgument

METHODS = ("DAS", "MV", "EIBMV")
WINDOWS = ("rectangular", "hanning", "hamming")

# Extra frame samples kept on both sides of the imaging window.
FRAME_MARGIN = 256


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def transmit_time(x_rel, z, focus_depth: float, c0: float):
    """One-way transmit arrival time under the virtual-source model.

    The virtual source sits at ``focus_depth`` on the scanline axis; ``x_rel``
    is the lateral offset from the scanline. Points shallower than the focus
    are reached by the converging wave, deeper points by the diverging one.
    """
    x_rel = np.asarray(x_rel, dtype=float)
    z = np.asarray(z, dtype=float)
    dz = z - focus_depth
    sign = np.where(dz >= 0.0, 1.0, -1.0)
    return (focus_depth + sign * np.sqrt(dz * dz + x_rel * x_rel)) / c0


def make_window(kind: str, length: int) -> np.ndarray:
    """Return a DAS apodization window normalized to unit sum.

    Parameters
    ----------
    kind : {"rectangular", "hanning", "hamming"}
    length : int
        Number of aperture elements, at least 1.

    Returns
    -------
    numpy.ndarray
        Nonnegative weights summing to one.
    """
    if int(length) != length or length < 1:
        raise InvalidArgument(f"window length must be a positive integer, got {length!r}")
    length = int(length)
    if kind == "rectangular":
        w = np.ones(length)
    elif kind == "hanning":
        w = np.hanning(length)
    elif kind == "hamming":
        w = np.hamming(length)
    else:
        raise InvalidArgument(f"unknown window kind {kind!r}; expected one of {WINDOWS}")
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        raise InvalidArgument(f"{kind} window of length {length} is identically zero")
    return w / total


@dataclass(frozen=True, eq=False)
class ScanGeometry:
    """Linear array, scanline positions, depth grid and acoustic constants.

    ``t0`` and ``n_samples`` describe the RF time axis; when omitted they are
    derived so that every pixel delay of the depth grid falls inside the frame
    with ``FRAME_MARGIN`` samples to spare on both sides.
    """

    element_x: np.ndarray
    pitch: float
    kerf: float
    c0: float
    scanline_x: np.ndarray
    depth_min: float
    depth_max: float
    fs: float
    rx_aperture: int
    depth_decimation: int = 4
    t0: Optional[float] = None
    n_samples: Optional[int] = None

    def __post_init__(self):
        ex = _frozen(self.element_x)
        sx = _frozen(self.scanline_x)
        object.__setattr__(self, "element_x", ex)
        object.__setattr__(self, "scanline_x", sx)
        if ex.ndim != 1 or ex.size < 1:
            raise InvalidArgument("element_x must be a nonempty 1-D sequence")
        if not self.pitch > 0:
            raise InvalidArgument("pitch must be positive")
        if self.kerf < 0 or self.kerf >= self.pitch:
            raise InvalidArgument("kerf must lie in [0, pitch)")
        if ex.size > 1:
            steps = np.diff(ex)
            if np.any(steps <= 0) or np.max(np.abs(steps - self.pitch)) > 1e-9 * self.pitch:
                raise InvalidArgument("element_x must be strictly increasing with spacing = pitch")
        if not self.c0 > 0 or not self.fs > 0:
            raise InvalidArgument("c0 and fs must be positive")
        if not self.depth_min < self.depth_max:
            raise InvalidArgument("depth_min must be smaller than depth_max")
        if self.depth_min < 0:
            raise InvalidArgument("depth_min must be nonnegative")
        if int(self.rx_aperture) != self.rx_aperture or not 1 <= self.rx_aperture <= ex.size:
            raise InvalidArgument("rx_aperture must be an integer in [1, number of elements]")
        object.__setattr__(self, "rx_aperture", int(self.rx_aperture))
        if sx.ndim != 1 or sx.size < 1:
            raise InvalidArgument("scanline_x must be a nonempty 1-D sequence")
        if int(self.depth_decimation) != self.depth_decimation or self.depth_decimation < 1:
            raise InvalidArgument("depth_decimation must be a positive integer")
        object.__setattr__(self, "depth_decimation", int(self.depth_decimation))
        if self.t0 is None or self.n_samples is None:
            t0, n = self._default_time_axis()
            if self.t0 is None:
                object.__setattr__(self, "t0", t0)
            if self.n_samples is None:
                object.__setattr__(self, "n_samples", n)
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise InvalidArgument("n_samples must be a positive integer")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "t0", float(self.t0))

    @classmethod
    def reference(
        cls,
        n_elements: int = 132,
        rx_aperture: int = 66,
        pitch: float = 409e-6,
        kerf: float = 20e-6,
        c0: float = 1540.0,
        fs: float = 50e6,
        n_scanlines: int = 64,
        depth_min: float = 20e-3,
        depth_max: float = 70e-3,
        depth_decimation: int = 4,
    ) -> "ScanGeometry":
        """Array centered on x = 0 with scanlines at central aperture positions.

        A scanline sits at the center of every possible contiguous receive
        aperture; the ``n_scanlines`` most central of them are kept.
        """
        element_x = (np.arange(n_elements) - (n_elements - 1) / 2.0) * pitch
        n_positions = n_elements - rx_aperture + 1
        if not 1 <= n_scanlines <= n_positions:
            raise InvalidArgument(f"n_scanlines must lie in [1, {n_positions}]")
        first = (n_positions - n_scanlines) // 2
        starts = np.arange(first, first + n_scanlines)
        scanline_x = (element_x[starts] + element_x[starts + rx_aperture - 1]) / 2.0
        return cls(
            element_x=element_x,
            pitch=pitch,
            kerf=kerf,
            c0=c0,
            scanline_x=scanline_x,
            depth_min=depth_min,
            depth_max=depth_max,
            fs=fs,
            rx_aperture=rx_aperture,
            depth_decimation=depth_decimation,
        )

    @property
    def n_elements(self) -> int:
        return int(self.element_x.size)

    @property
    def n_scanlines(self) -> int:
        return int(self.scanline_x.size)

    @property
    def depth_step(self) -> float:
        return self.c0 / (2.0 * self.fs) * self.depth_decimation

    @property
    def depths(self) -> np.ndarray:
        n = int(math.floor((self.depth_max - self.depth_min) / self.depth_step + 1e-9)) + 1
        return self.depth_min + self.depth_step * np.arange(n)

    @property
    def image_fs(self) -> float:
        """Sampling rate of the beamformed signal along the depth grid."""
        return self.fs / self.depth_decimation

    def _default_time_axis(self):
        half = (self.rx_aperture - 1) / 2.0 * self.pitch
        lateral = np.max(np.abs(self.scanline_x)) + half
        lateral = max(lateral, float(np.max(np.abs(self.element_x))))
        t_min = 2.0 * self.depth_min / self.c0
        t_max = (self.depth_max + math.hypot(self.depth_max, 2.0 * lateral)) / self.c0
        t0 = max(0.0, t_min - FRAME_MARGIN / self.fs)
        n = int(math.ceil((t_max - t0) * self.fs)) + FRAME_MARGIN
        return t0, n

    def to_dict(self) -> dict:
        return {
            "element_x": self.element_x.tolist(),
            "pitch": self.pitch,
            "kerf": self.kerf,
            "c0": self.c0,
            "scanline_x": self.scanline_x.tolist(),
            "depth_min": self.depth_min,
            "depth_max": self.depth_max,
            "fs": self.fs,
            "rx_aperture": self.rx_aperture,
            "depth_decimation": self.depth_decimation,
            "t0": self.t0,
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScanGeometry":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class TransmitPulse:
    """Gaussian-weighted cosine burst centered on t = 0.

    Sample ``j`` is taken at ``(j - (N - 1) / 2) / fs`` with
    ``N = round(n_cycles / f0 * fs)``. The Gaussian standard deviation is a
    quarter of the burst duration.
    """

    f0: float = 1.96e6
    n_cycles: float = 2.0
    fs: float = 50e6
    polarity: int = 1
    tx_focus_depth: float = 50e-3
    initial_pressure: float = 1.0e6
    samples: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.f0 > 0 or not self.fs > 0 or not self.n_cycles > 0:
            raise InvalidArgument("f0, fs and n_cycles must be positive")
        if self.polarity not in (1, -1):
            raise InvalidArgument("polarity must be +1 or -1")
        if not self.tx_focus_depth > 0:
            raise InvalidArgument("tx_focus_depth must be positive")
        if self.n_taps < 1:
            raise InvalidArgument("pulse shorter than one sample")
        s = self.shape(self.f0)
        if self.polarity < 0:
            s = -s
        object.__setattr__(self, "samples", _frozen(s))

    @property
    def duration(self) -> float:
        return self.n_cycles / self.f0

    @property
    def n_taps(self) -> int:
        return int(round(self.duration * self.fs))

    @property
    def center_index(self) -> float:
        return (self.n_taps - 1) / 2.0

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_taps) - self.center_index) / self.fs

    def envelope(self) -> np.ndarray:
        sigma = self.duration / 4.0
        t = self.times
        return np.exp(-0.5 * (t / sigma) ** 2)

    def shape(self, carrier: float) -> np.ndarray:
        """Positive-polarity burst with this pulse's envelope at ``carrier`` Hz."""
        return self.envelope() * np.cos(2.0 * np.pi * carrier * self.times)

    def harmonic_samples(self) -> np.ndarray:
        """Same envelope carrying 2 f0; independent of polarity."""
        return self.shape(2.0 * self.f0)

    def with_polarity(self, polarity: int) -> "TransmitPulse":
        return TransmitPulse(
            f0=self.f0,
            n_cycles=self.n_cycles,
            fs=self.fs,
            polarity=polarity,
            tx_focus_depth=self.tx_focus_depth,
            initial_pressure=self.initial_pressure,
        )


@dataclass(frozen=True, eq=False)
class RfChannelFrame:
    """Per-element RF samples from one transmit event.

    ``polarity`` is 0 for frames that no longer belong to a single transmit
    (e.g. a pulse-inversion sum).
    """

    data: np.ndarray
    fs: float
    t0: float
    polarity: int
    scanline_index: int

    def __post_init__(self):
        d = _frozen(self.data)
        if d.ndim != 2:
            raise InvalidArgument("frame data must be 2-D [element][sample]")
        object.__setattr__(self, "data", d)
        if not self.fs > 0:
            raise InvalidArgument("fs must be positive")
        if self.polarity not in (-1, 0, 1):
            raise InvalidArgument("polarity must be -1, 0 or +1")
        if self.scanline_index < 0:
            raise InvalidArgument("scanline_index must be nonnegative")

    @property
    def n_channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_samples(self) -> int:
        return int(self.data.shape[1])

    def replace_data(self, data, polarity: Optional[int] = None) -> "RfChannelFrame":
        return RfChannelFrame(
            data=data,
            fs=self.fs,
            t0=self.t0,
            polarity=self.polarity if polarity is None else polarity,
            scanline_index=self.scanline_index,
        )


@dataclass(frozen=True)
class BeamformerParams:
    """Beamforming method and weight-computation parameters.

    K is the temporal half-window in samples, L the subarray length,
    ``delta_load`` the diagonal-loading factor and ``delta_sub`` the
    signal-subspace eigenvalue ratio (EIBMV only).
    """

    method: str = "EIBMV"
    window: str = "rectangular"
    K: int = 25
    L: int = 33
    delta_load: float = 1.0 / 3300.0
    delta_sub: float = 0.5

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"method must be one of {METHODS}, got {self.method!r}")
        if self.window not in WINDOWS:
            raise InvalidArgument(f"window must be one of {WINDOWS}, got {self.window!r}")
        if int(self.K) != self.K or self.K < 0:
            raise InvalidArgument("K must be a nonnegative integer")
        if int(self.L) != self.L or self.L < 1:
            raise InvalidArgument("L must be a positive integer")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "L", int(self.L))
        if not (self.delta_load >= 0 and math.isfinite(self.delta_load)):
            raise InvalidArgument("delta_load must be finite and nonnegative")
        if not 0.0 <= self.delta_sub <= 1.0:
            raise InvalidArgument("delta_sub must lie in [0, 1]")

    def check_geometry(self, geometry: ScanGeometry) -> None:
        if self.method != "DAS" and self.L > geometry.rx_aperture:
            raise InvalidArgument(
                f"L = {self.L} exceeds the receive aperture of {geometry.rx_aperture} elements"
            )


@dataclass(frozen=True)
class Scatterer:
    x: float
    z: float
    amplitude: float = 1.0
    harmonic_coeff: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 1.0:
            raise InvalidArgument("scatterer amplitude must lie in [0, 1]")
        if not self.harmonic_coeff >= 0.0:
            raise InvalidArgument("harmonic_coeff must be nonnegative")
        if not (math.isfinite(self.x) and math.isfinite(self.z)):
            raise InvalidArgument("scatterer position must be finite")


# Floor for the unclamped dB map so anechoic zeros stay finite.
DB_FLOOR = -300.0


@dataclass(frozen=True, eq=False)
class BeamformedImage:
    """Envelope image indexed ``[scanline][depth sample]``.

    ``guard`` depth samples at both ends are excluded from metrics. ``db``
    is clamped to the display dynamic range; metrics use ``db_unclamped``.
    ``weights``/``mv_weights``/``num_subspace`` are only populated when the
    image was formed with weight bookkeeping enabled.
    """

    values: np.ndarray
    lateral: np.ndarray
    depth: np.ndarray
    dynamic_range_db: float = 50.0
    guard: int = 0
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    mv_weights: Optional[np.ndarray] = field(default=None, repr=False)
    num_subspace: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise InvalidArgument("image values must be 2-D [scanline][depth]")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidArgument("envelope values must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        lat, dep = _frozen(self.lateral), _frozen(self.depth)
        if lat.shape != (v.shape[0],) or dep.shape != (v.shape[1],):
            raise InvalidArgument("axis lengths do not match the image shape")
        object.__setattr__(self, "lateral", lat)
        object.__setattr__(self, "depth", dep)
        if not self.dynamic_range_db > 0:
            raise InvalidArgument("dynamic_range_db must be positive")
        if self.guard < 0 or 2 * self.guard >= v.shape[1]:
            raise InvalidArgument("guard band leaves no usable depth samples")
        for name in ("weights", "mv_weights", "num_subspace"):
            a = getattr(self, name)
            if a is not None:
                object.__setattr__(self, name, _frozen(a, dtype=a.dtype))

    @property
    def shape(self):
        return self.values.shape

    @property
    def db_unclamped(self) -> np.ndarray:
        peak = self.values.max()
        if peak <= 0:
            return np.full(self.values.shape, DB_FLOOR)
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(self.values / peak)
        return np.maximum(db, DB_FLOOR)

    @property
    def db(self) -> np.ndarray:
        return np.maximum(self.db_unclamped, -self.dynamic_range_db)

    def usable_depth(self) -> slice:
        return slice(self.guard, self.values.shape[1] - self.guard)
