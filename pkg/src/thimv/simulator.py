"""Phantoms and pulse-inversion RF channel-data synthesis.

The forward model is linear in the scatterers. Every scatterer returns the
transmitted burst (sign follows the transmit polarity) plus a polarity-free
burst at twice the center frequency scaled by its ``harmonic_coeff``. Both
echoes are attenuated over the round-trip path at their own frequency and
spread as 1/r on the receive leg. Transmit timing follows the virtual-source
model in :func:`thimv.core.transmit_time`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.signal import fftconvolve

from .core import RfChannelFrame, ScanGeometry, Scatterer, TransmitPulse, transmit_time
from .errors import InvalidArgument

POINT_DEPTHS = tuple(22.5e-3 + 5e-3 * i for i in range(9))
CYST_DEPTHS = tuple(22.5e-3 + 10e-3 * i for i in range(5))
CYST_LATERAL = -3e-3
CYST_RADIUS = 2.5e-3

ATTENUATION_DB_CM_MHZ = 0.5
REFERENCE_RANGE = 10e-3
NOISELESS = "noiseless"

# Scatterers per chunk when depositing echoes; bounds temporary memory.
_CHUNK = 8192


def derive_seed(seed: int, role: str, index: int = 0) -> int:
    """``seed XOR hash(role, index)`` as an unsigned 64-bit integer."""
    digest = hashlib.blake2b(f"{role}:{index}".encode(), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True, eq=False)
class Phantom:
    """Scatterer set stored column-wise.

    ``scatterers`` materializes :class:`Scatterer` records on demand; the
    arrays are what the simulator consumes.
    """

    x: np.ndarray
    z: np.ndarray
    amplitude: np.ndarray
    harmonic_coeff: np.ndarray
    label: str = "points"
    cyst_centers: tuple = ()
    cyst_radius: float = 0.0
    seed: int = 0

    def __post_init__(self):
        arrays = []
        for name in ("x", "z", "amplitude", "harmonic_coeff"):
            a = np.array(getattr(self, name), dtype=float).ravel()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
            arrays.append(a)
        if len({a.size for a in arrays}) != 1:
            raise InvalidArgument("phantom columns must have equal length")
        if self.label not in ("points", "cysts"):
            raise InvalidArgument("label must be 'points' or 'cysts'")
        if np.any((self.amplitude < 0) | (self.amplitude > 1)):
            raise InvalidArgument("scatterer amplitudes must lie in [0, 1]")
        if np.any(self.harmonic_coeff < 0):
            raise InvalidArgument("harmonic coefficients must be nonnegative")
        object.__setattr__(self, "cyst_centers", tuple(tuple(map(float, c)) for c in self.cyst_centers))

    @classmethod
    def from_scatterers(cls, scatterers: Sequence[Scatterer], **kw) -> "Phantom":
        cols = [[getattr(s, f) for s in scatterers] for f in ("x", "z", "amplitude", "harmonic_coeff")]
        return cls(*cols, **kw)

    @property
    def scatterers(self) -> tuple:
        return tuple(
            Scatterer(float(x), float(z), float(a), float(h))
            for x, z, a, h in zip(self.x, self.z, self.amplitude, self.harmonic_coeff)
        )

    def __len__(self) -> int:
        return int(self.x.size)

    def union(self, other: "Phantom") -> "Phantom":
        return Phantom(
            np.concatenate([self.x, other.x]),
            np.concatenate([self.z, other.z]),
            np.concatenate([self.amplitude, other.amplitude]),
            np.concatenate([self.harmonic_coeff, other.harmonic_coeff]),
            label=self.label,
            cyst_centers=self.cyst_centers + other.cyst_centers,
            cyst_radius=max(self.cyst_radius, other.cyst_radius),
            seed=self.seed,
        )

    def check_geometry(self, geometry: ScanGeometry) -> None:
        if len(self) and (self.z.min() < geometry.depth_min or self.z.max() > geometry.depth_max):
            raise InvalidArgument("phantom scatterers fall outside the geometry depth range")


def make_point_phantom(geometry: ScanGeometry, harmonic_coeff: float = 0.1) -> Phantom:
    """Nine unit wire targets at 22.5, 27.5, ..., 62.5 mm on the central scanline."""
    if geometry.depth_min > POINT_DEPTHS[0] or geometry.depth_max < POINT_DEPTHS[-1]:
        raise InvalidArgument(
            "geometry depth range must cover 22.5-62.5 mm for the point phantom"
        )
    x0 = float(geometry.scanline_x[np.argmin(np.abs(geometry.scanline_x))])
    n = len(POINT_DEPTHS)
    return Phantom(
        x=np.full(n, x0),
        z=np.array(POINT_DEPTHS),
        amplitude=np.ones(n),
        harmonic_coeff=np.full(n, harmonic_coeff),
        label="points",
    )


def make_cyst_phantom(
    geometry: ScanGeometry,
    seed: int,
    *,
    f0: float = 1.96e6,
    density: float = 10.0,
    harmonic_coeff: float = 0.1,
    radius: float = CYST_RADIUS,
    centers: Optional[Sequence] = None,
) -> Phantom:
    """Speckle background with anechoic circular cysts.

    Scatterers are drawn uniformly over the imaged region (lateral extent
    of the scanlines, depth range of the geometry) at
    ``density`` scatterers per squared wavelength; any scatterer strictly
    inside a cyst is discarded. Amplitudes are uniform on [0, 1).
    """
    if centers is None:
        centers = [(CYST_LATERAL, z) for z in CYST_DEPTHS]
    wavelength = geometry.c0 / f0
    x_lo, x_hi = float(geometry.scanline_x[0]), float(geometry.scanline_x[-1])
    z_lo, z_hi = geometry.depth_min, geometry.depth_max
    area = (x_hi - x_lo) * (z_hi - z_lo)
    n = int(round(density * area / wavelength**2))
    rng = np.random.default_rng(derive_seed(seed, "phantom"))
    x = rng.uniform(x_lo, x_hi, n)
    z = rng.uniform(z_lo, z_hi, n)
    amp = rng.uniform(0.0, 1.0, n)
    keep = np.ones(n, dtype=bool)
    for cx, cz in centers:
        keep &= (x - cx) ** 2 + (z - cz) ** 2 >= radius**2
    return Phantom(
        x=x[keep],
        z=z[keep],
        amplitude=amp[keep],
        harmonic_coeff=np.full(int(keep.sum()), harmonic_coeff),
        label="cysts",
        cyst_centers=tuple(centers),
        cyst_radius=radius,
        seed=seed,
    )


class RfSynthesizer:
    """Echo synthesis for one phantom, reusing receive-side geometry.

    The receive distances and receive-leg attenuation do not depend on the
    scanline, so they are computed once and shared by every transmit event.
    """

    def __init__(
        self,
        phantom: Phantom,
        geometry: ScanGeometry,
        pulse: TransmitPulse,
        attenuation_db_cm_mhz: float = ATTENUATION_DB_CM_MHZ,
    ):
        self.phantom = phantom
        self.geometry = geometry
        self.pulse = pulse
        # dB/cm/MHz -> nepers per metre at f0 and at 2 f0
        k = attenuation_db_cm_mhz * math.log(10.0) / 20.0 * 100.0 * pulse.f0 / 1e6
        self._k_f, self._k_h = k, 2.0 * k
        self._chunks = []
        ex = geometry.element_x
        for s in range(0, len(phantom), _CHUNK):
            sl = slice(s, s + _CHUNK)
            xs, zs = phantom.x[sl], phantom.z[sl]
            r = np.hypot(ex[:, None] - xs[None, :], zs[None, :])
            spread = REFERENCE_RANGE / np.maximum(r, geometry.pitch)
            rx_f = spread * np.exp(-self._k_f * r)
            rx_h = spread * np.exp(-self._k_h * r)
            self._chunks.append((sl, r, rx_f, rx_h))
        self._fund_shape = pulse.shape(pulse.f0)
        self._harm_shape = pulse.harmonic_samples()

    def components(self, scanline_index: int):
        """Fundamental (positive polarity) and harmonic channel data."""
        g, ph, pulse = self.geometry, self.phantom, self.pulse
        if not 0 <= scanline_index < g.n_scanlines:
            raise InvalidArgument(f"scanline_index {scanline_index} out of range")
        n_taps = pulse.n_taps
        width = g.n_samples + n_taps - 1
        n_el = g.n_elements
        fund = np.zeros(n_el * width)
        harm = np.zeros(n_el * width)
        x_line = g.scanline_x[scanline_index]
        row = (np.arange(n_el) * width)[:, None]
        for sl, r, rx_f, rx_h in self._chunks:
            t_tx = transmit_time(ph.x[sl] - x_line, ph.z[sl], pulse.tx_focus_depth, g.c0)
            tx_path = g.c0 * t_tx
            a_f = rx_f * (ph.amplitude[sl] * np.exp(-self._k_f * tx_path))[None, :]
            a_h = rx_h * (ph.amplitude[sl] * ph.harmonic_coeff[sl] * np.exp(-self._k_h * tx_path))[None, :]
            tau = t_tx[None, :] + r / g.c0
            u = (tau - g.t0) * g.fs - pulse.center_index
            i0 = np.floor(u)
            frac = u - i0
            m = i0.astype(np.int64) + (n_taps - 1)
            for shift, w in ((0, 1.0 - frac), (1, frac)):
                pos = m + shift
                ok = (pos >= 0) & (pos < width)
                idx = (row + pos)[ok]
                fund += np.bincount(idx, weights=(a_f * w)[ok], minlength=fund.size)
                harm += np.bincount(idx, weights=(a_h * w)[ok], minlength=harm.size)
        fund = fund.reshape(n_el, width)
        harm = harm.reshape(n_el, width)
        keep = slice(n_taps - 1, n_taps - 1 + g.n_samples)
        f_out = fftconvolve(fund, self._fund_shape[None, :], axes=1)[:, keep]
        h_out = fftconvolve(harm, self._harm_shape[None, :], axes=1)[:, keep]
        return f_out, h_out

    def frame(self, scanline_index: int, polarity: Optional[int] = None) -> RfChannelFrame:
        pol = self.pulse.polarity if polarity is None else polarity
        fund, harm = self.components(scanline_index)
        return self._frame(pol * fund + harm, pol, scanline_index)

    def pair(self, scanline_index: int):
        """(+1, -1) transmit frames sharing a single echo computation."""
        fund, harm = self.components(scanline_index)
        return (
            self._frame(fund + harm, 1, scanline_index),
            self._frame(-fund + harm, -1, scanline_index),
        )

    def _frame(self, data, polarity, scanline_index):
        g = self.geometry
        return RfChannelFrame(data=data, fs=g.fs, t0=g.t0, polarity=polarity, scanline_index=scanline_index)


def synthesize_rf(
    phantom: Phantom,
    geometry: ScanGeometry,
    pulse: TransmitPulse,
    scanline_index: int,
    attenuation_db_cm_mhz: float = ATTENUATION_DB_CM_MHZ,
) -> RfChannelFrame:
    """RF channel data for one transmit event along ``scanline_index``."""
    return RfSynthesizer(phantom, geometry, pulse, attenuation_db_cm_mhz).frame(scanline_index)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: Union[float, str] = 60.0
    seed: int = 0

    def __post_init__(self):
        if self.snr_db == NOISELESS:
            return
        if isinstance(self.snr_db, str) or not math.isfinite(self.snr_db):
            raise InvalidArgument(f"snr_db must be finite or {NOISELESS!r}")

    @property
    def noiseless(self) -> bool:
        return self.snr_db == NOISELESS


def add_noise(frame: RfChannelFrame, spec: NoiseSpec) -> RfChannelFrame:
    """Add white Gaussian noise at ``spec.snr_db`` below the mean frame power."""
    if spec.noiseless:
        return frame
    power = float(np.mean(frame.data**2))
    if power <= 0.0:
        raise InvalidArgument("SNR is undefined for a zero-power frame")
    sigma = math.sqrt(power / 10.0 ** (spec.snr_db / 10.0))
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal(frame.data.shape) * sigma
    return frame.replace_data(frame.data + noise)
