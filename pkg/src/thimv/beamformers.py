"""Delay-and-sum, minimum-variance and eigenspace-based MV beamforming.

Per-pixel operations (``estimate_covariance``, ``mv_weights``,
``eibmv_weights`` ...) follow the textbook definitions one pixel at a time.
``beamform_image`` runs the same computations for a whole scanline at once:
the spatially smoothed covariance is assembled from the full-aperture Gram
matrix (sum of its L x L diagonal blocks), and the solves and
eigendecompositions are batched through LAPACK.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    BeamformedImage,
    BeamformerParams,
    RfChannelFrame,
    ScanGeometry,
    make_window,
    transmit_time,
)
from .errors import InvalidArgument, NumericalFailure
from .numerics import check_hermitian, eig_hermitian, eigh_batch, envelope, solve_hpd, solve_hpd_batch

DEFAULT_FOCUS = 50e-3


@dataclass(frozen=True, eq=False)
class DelayedAperture:
    """Delay-aligned samples ``y[element][offset]`` for one pixel.

    Column ``K_max`` (the middle one) is the pixel's own time sample.
    """

    y: np.ndarray
    element_indices: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        if self.y.ndim != 2 or self.y.shape[1] % 2 != 1:
            raise InvalidArgument("y must be [elements][2K+1]")
        if self.y.shape[0] != len(self.element_indices) or len(self.delays) != self.y.shape[0]:
            raise InvalidArgument("row count must match the aperture")
        if not np.all(np.isfinite(self.delays)):
            raise InvalidArgument("delays must be finite")

    @property
    def K_max(self) -> int:
        return self.y.shape[1] // 2

    @property
    def M(self) -> int:
        return self.y.shape[0]

    def at(self, offset: int = 0) -> np.ndarray:
        return self.y[:, self.K_max + offset]


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    r_hat: np.ndarray
    K: int
    L: int
    delta_load: float
    n_subarrays: int
    epsilon: float = 0.0
    loaded: bool = False


@dataclass(frozen=True, eq=False)
class BeamformerWeights:
    w: np.ndarray
    method: str
    num_subspace: Optional[int] = None


def select_aperture(geometry: ScanGeometry, scanline_index: int) -> np.ndarray:
    """Indices of the ``rx_aperture`` contiguous elements nearest the scanline."""
    if not 0 <= scanline_index < geometry.n_scanlines:
        raise InvalidArgument(f"scanline_index {scanline_index} out of range")
    m, n = geometry.rx_aperture, geometry.n_elements
    center = (geometry.scanline_x[scanline_index] - geometry.element_x[0]) / geometry.pitch
    start = int(math.floor(center - (m - 1) / 2.0 + 0.5 + 1e-9))
    start = min(max(start, 0), n - m)
    return np.arange(start, start + m)


def compute_delays(
    geometry: ScanGeometry,
    scanline_index: int,
    depth,
    aperture: Sequence[int],
    tx_focus_depth: float = DEFAULT_FOCUS,
) -> np.ndarray:
    """Receive delays in (fractional) samples relative to the frame start.

    ``depth`` may be a scalar or an array; the result has shape
    ``depth.shape + (len(aperture),)``.
    """
    depth = np.asarray(depth, dtype=float)
    ex = geometry.element_x[np.asarray(aperture)]
    x_line = geometry.scanline_x[scanline_index]
    t_tx = transmit_time(0.0, depth, tx_focus_depth, geometry.c0)
    r = np.hypot(ex - x_line, depth[..., None])
    return (t_tx[..., None] + r / geometry.c0 - geometry.t0) * geometry.fs


def _aligned_windows(rows: np.ndarray, delays: np.ndarray, K: int) -> np.ndarray:
    """Linearly interpolated samples of ``rows[m]`` at ``delays[..., m] + n``.

    Returns shape ``delays.shape + (2K+1,)``; positions outside the frame
    read as zero. The offsets are integers, so the interpolation fraction is
    shared across the window and whole runs of ``2K+2`` samples can be
    gathered at once.
    """
    n_rows, ns = rows.shape
    width = 2 * K + 2
    pad = width
    padded = np.zeros((n_rows, ns + 2 * pad), dtype=rows.dtype)
    padded[:, pad : pad + ns] = rows
    windows = sliding_window_view(padded, width, axis=1)
    i0 = np.floor(delays)
    frac = (delays - i0)[..., None]
    start = np.clip(i0.astype(np.int64) - K + pad, 0, windows.shape[1] - 1)
    w = windows[np.arange(n_rows), start]
    return (1.0 - frac) * w[..., :-1] + frac * w[..., 1:]


def extract_delayed_aperture(
    frame: RfChannelFrame,
    delays,
    K: int,
    element_indices: Optional[Sequence[int]] = None,
) -> DelayedAperture:
    """Samples at ``delays + n`` for ``n = -K..K``, linearly interpolated.

    Without ``element_indices`` the frame rows are taken to be the aperture
    itself, in delay order.
    """
    delays = np.asarray(delays, dtype=float)
    if element_indices is None:
        element_indices = np.arange(frame.n_channels)
    element_indices = np.asarray(element_indices)
    if delays.shape != element_indices.shape:
        raise InvalidArgument("one delay per aperture element is required")
    if K < 0:
        raise InvalidArgument("K must be nonnegative")
    y = _aligned_windows(frame.data[element_indices], delays, K)
    return DelayedAperture(y=y, element_indices=element_indices, delays=delays)


def das_output(y, window) -> float:
    """Window-weighted sum of the aligned samples at the pixel's own time."""
    if isinstance(y, DelayedAperture):
        y = y.at(0)
    y = np.asarray(y)
    window = np.asarray(window, dtype=float)
    if y.shape != window.shape:
        raise InvalidArgument(f"window length {window.size} does not match aperture {y.size}")
    return np.dot(window, y)


def _smoothed_covariance(y: np.ndarray, K: int, L: int) -> np.ndarray:
    """Batched spatially smoothed, temporally averaged covariance.

    ``y`` has shape ``(..., M, 2K_y+1)`` with ``K_y >= K``; the central
    ``2K+1`` columns are used.
    """
    M, width = y.shape[-2], y.shape[-1]
    mid = width // 2
    ywin = y[..., mid - K : mid + K + 1]
    gram = ywin @ np.conj(np.swapaxes(ywin, -1, -2))
    n_sub = M - L + 1
    r = gram[..., 0:L, 0:L].copy()
    for i in range(1, n_sub):
        r += gram[..., i : i + L, i : i + L]
    r /= (2 * K + 1) * n_sub
    return r


def estimate_covariance(y: DelayedAperture, K: int, L: int, delta_load: float = 0.0) -> CovarianceEstimate:
    """Spatially smoothed, temporally averaged covariance (before loading).

    Averages ``y_i(k+n) y_i(k+n)^H`` over the ``M - L + 1`` subarrays of
    length ``L`` and the ``2K + 1`` time offsets ``n``.
    """
    M = y.M
    if not 1 <= L <= M:
        raise InvalidArgument(f"L must lie in [1, {M}], got {L}")
    if not 0 <= K <= y.K_max:
        raise InvalidArgument(f"K = {K} exceeds the extracted window (K_max = {y.K_max})")
    r = _smoothed_covariance(y.y, K, L)
    return CovarianceEstimate(r_hat=r, K=K, L=L, delta_load=delta_load, n_subarrays=M - L + 1)


def diagonal_load(cov: CovarianceEstimate) -> CovarianceEstimate:
    """Add ``epsilon I`` with ``epsilon = delta_load * trace(r_hat)``."""
    eps = float(cov.delta_load * np.trace(cov.r_hat).real)
    r = cov.r_hat + eps * np.eye(cov.L)
    return CovarianceEstimate(
        r_hat=r,
        K=cov.K,
        L=cov.L,
        delta_load=cov.delta_load,
        n_subarrays=cov.n_subarrays,
        epsilon=eps,
        loaded=True,
    )


def mv_weights(cov_loaded: CovarianceEstimate) -> BeamformerWeights:
    """Capon weights ``R^-1 a / (a^H R^-1 a)`` with ``a`` all ones."""
    r = cov_loaded.r_hat
    a = np.ones(r.shape[0])
    ria = solve_hpd(r, a)
    denom = np.vdot(a, ria)
    if denom == 0 or not np.isfinite(denom):
        raise NumericalFailure("degenerate MV normalization; increase the diagonal loading")
    return BeamformerWeights(w=ria / denom, method="MV")


def subspace_size(eigenvalues: np.ndarray, delta_sub: float) -> int:
    """Number of eigenvalues >= delta_sub * lambda_max (at least one)."""
    lam = np.asarray(eigenvalues)
    return max(1, int(np.count_nonzero(lam >= delta_sub * lam[0])))


def eibmv_weights(cov_loaded: CovarianceEstimate, w_mv: BeamformerWeights, delta_sub: float) -> BeamformerWeights:
    """Project the MV weights onto the dominant-eigenvector subspace."""
    if not 0.0 <= delta_sub <= 1.0:
        raise InvalidArgument("delta_sub must lie in [0, 1]")
    r = check_hermitian(cov_loaded.r_hat)
    dec = eig_hermitian(r)
    num = subspace_size(dec.eigenvalues, delta_sub)
    w = np.asarray(w_mv.w)
    if num == r.shape[0]:
        return BeamformerWeights(w=w.copy(), method="EIBMV", num_subspace=num)
    es = dec.eigenvectors[:, :num]
    return BeamformerWeights(w=es @ (es.conj().T @ w), method="EIBMV", num_subspace=num)


def adaptive_output(y: DelayedAperture, w: BeamformerWeights) -> complex:
    """Subarray-averaged output ``(1/(M-L+1)) sum_i w^H y_i(k)``."""
    L = len(w.w)
    avg = _subarray_mean(y.at(0), L)
    return np.vdot(w.w, avg)


def _subarray_mean(y_k: np.ndarray, L: int) -> np.ndarray:
    """Mean of the ``M - L + 1`` length-L subvectors of the last axis."""
    n_sub = y_k.shape[-1] - L + 1
    out = y_k[..., 0:L].copy()
    for i in range(1, n_sub):
        out += y_k[..., i : i + L]
    return out / n_sub


def _scanline_output(
    frame: RfChannelFrame,
    geometry: ScanGeometry,
    scanline_index: int,
    params: BeamformerParams,
    depths: np.ndarray,
    tx_focus_depth: float,
    keep: Optional[dict],
):
    aperture = select_aperture(geometry, scanline_index)
    delays = compute_delays(geometry, scanline_index, depths, aperture, tx_focus_depth)
    K = 0 if params.method == "DAS" else params.K
    y = _aligned_windows(frame.data[aperture], delays, K)  # (P, M, 2K+1)
    y_k = y[:, :, K]

    if params.method == "DAS":
        window = make_window(params.window, geometry.rx_aperture)
        return y_k @ window

    L = params.L
    M = geometry.rx_aperture
    r = _smoothed_covariance(y, K, L)
    trace = np.trace(r, axis1=-2, axis2=-1).real
    eye = np.eye(L)
    r = r + (params.delta_load * trace)[:, None, None] * eye
    silent = trace <= 0.0
    if np.any(silent):
        # All-zero data: any unit-gain weights give zero output; use uniform ones.
        r[silent] = eye
    a = np.ones((len(depths), L))
    try:
        ria = solve_hpd_batch(r, a)
    except NumericalFailure as exc:
        p = exc.args[1] if len(exc.args) > 1 else -1
        raise NumericalFailure(
            f"covariance not positive definite at pixel (scanline {scanline_index}, "
            f"depth sample {p}, depth {depths[p] * 1e3:.3f} mm); increase the diagonal loading"
        ) from None
    w_mv = ria / np.sum(ria, axis=-1, keepdims=True)
    w = w_mv
    num = None
    if params.method == "EIBMV":
        lam, v = eigh_batch(r)
        mask = lam >= params.delta_sub * lam[:, :1]
        mask[:, 0] = True
        num = mask.sum(axis=1)
        coef = np.einsum("pji,pj->pi", v.conj(), w_mv) * mask
        w = np.einsum("pij,pj->pi", v, coef)
        full = num == L
        w[full] = w_mv[full]
    avg = _subarray_mean(y_k, L)
    out = np.einsum("pi,pi->p", w.conj(), avg)
    if keep is not None:
        keep["weights"].append(w)
        if params.method == "EIBMV":
            keep["mv_weights"].append(w_mv)
            keep["num"].append(num)
    return out


def beamform_image(
    frames: Sequence[RfChannelFrame],
    params: BeamformerParams,
    geometry: ScanGeometry,
    *,
    f0: float = 1.96e6,
    tx_focus_depth: float = DEFAULT_FOCUS,
    dynamic_range_db: float = 50.0,
    keep_weights: bool = False,
) -> BeamformedImage:
    """Form an envelope image from one RF frame per scanline.

    Parameters
    ----------
    frames : sequence of RfChannelFrame
        ``frames[i]`` holds the (harmonic) channel data of scanline ``i``.
    params : BeamformerParams
    geometry : ScanGeometry
    f0 : float
        Transmit center frequency; sets the guard band excluded from metrics.
    keep_weights : bool
        Store per-pixel weights (and the MV weights and subspace sizes for
        EIBMV) on the returned image.

    Raises
    ------
    NumericalFailure
        If a pixel covariance cannot be inverted; the message names the pixel.
    """
    params.check_geometry(geometry)
    if len(frames) != geometry.n_scanlines:
        raise InvalidArgument(f"expected {geometry.n_scanlines} frames, got {len(frames)}")
    depths = geometry.depths
    keep = {"weights": [], "mv_weights": [], "num": []} if keep_weights else None
    rf = np.empty((geometry.n_scanlines, depths.size))
    for i, frame in enumerate(frames):
        if frame.n_channels != geometry.n_elements:
            raise InvalidArgument(
                f"frame {i} has {frame.n_channels} channels, geometry has {geometry.n_elements}"
            )
        if frame.fs != geometry.fs or frame.t0 != geometry.t0:
            raise InvalidArgument(f"frame {i} time axis does not match the geometry")
        out = _scanline_output(frame, geometry, i, params, depths, tx_focus_depth, keep)
        rf[i] = np.real(out)
    env = envelope(rf, geometry.image_fs)
    guard = int(math.ceil(geometry.image_fs / f0))
    extra = {}
    if keep_weights and keep["weights"]:
        extra["weights"] = np.stack(keep["weights"])
        if params.method == "EIBMV":
            extra["mv_weights"] = np.stack(keep["mv_weights"])
            extra["num_subspace"] = np.stack(keep["num"])
    return BeamformedImage(
        values=env,
        lateral=geometry.scanline_x,
        depth=depths,
        dynamic_range_db=dynamic_range_db,
        guard=guard,
        **extra,
    )
