"""Image-quality measurements on beamformed envelope images.

All measurements read the unclamped dB map (``BeamformedImage.db_unclamped``)
and skip the guard band at both ends of the depth axis. Positions are given
in metres; widths and radii are reported in millimetres.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import uniform_filter1d

from .core import BeamformedImage
from .errors import InvalidArgument, MeasurementFailure

log = logging.getLogger(__name__)

HALF_MAX_DB = -6.0
ROI_SEPARATION = 6e-3
MIN_RADIUS_CONTRAST_DB = 3.0


@dataclass(frozen=True)
class RoiPair:
    """Cyst and background circles of equal radius at the same depth."""

    cyst_center: Tuple[float, float]
    background_center: Tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("ROI radius must be positive")
        if not math.isclose(self.cyst_center[1], self.background_center[1], abs_tol=1e-12):
            raise InvalidArgument("cyst and background circles must share the same depth")

    @classmethod
    def for_cyst(cls, center, radius: float, separation: float = ROI_SEPARATION) -> "RoiPair":
        """Background circle ``separation`` to the right of the cyst."""
        cx, cz = center
        return cls((float(cx), float(cz)), (float(cx) + separation, float(cz)), float(radius))


def _mean(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0 or np.all(np.isnan(arr)):
        return float("nan")
    return float(np.nanmean(arr))


@dataclass(frozen=True)
class QualityReport:
    """Per-target metrics; failed measurements are NaN and skipped in means."""

    fwhm_mm: tuple = ()
    cr_db: tuple = ()
    cnr: tuple = ()
    radius_mm: tuple = ()
    radius_err_mm: tuple = ()

    @property
    def mean_fwhm_mm(self) -> float:
        return _mean(self.fwhm_mm)

    @property
    def mean_cr_db(self) -> float:
        return _mean(self.cr_db)

    @property
    def mean_cnr(self) -> float:
        return _mean(self.cnr)

    @property
    def mean_radius_mm(self) -> float:
        return _mean(self.radius_mm)

    @property
    def mean_radius_err_mm(self) -> float:
        return _mean(self.radius_err_mm)

    def merge(self, other: "QualityReport") -> "QualityReport":
        return QualityReport(
            fwhm_mm=self.fwhm_mm + other.fwhm_mm,
            cr_db=self.cr_db + other.cr_db,
            cnr=self.cnr + other.cnr,
            radius_mm=self.radius_mm + other.radius_mm,
            radius_err_mm=self.radius_err_mm + other.radius_err_mm,
        )


def lateral_fwhm(image: BeamformedImage, target_depth: float, level_db: float = HALF_MAX_DB, search: float = 1e-3) -> float:
    """Lateral -6 dB width (mm) through the brightest pixel near ``target_depth``.

    The peak is searched over all scanlines within ``search`` metres of the
    target depth. Crossings are linearly interpolated in dB between
    neighbouring scanlines.
    """
    usable = image.usable_depth()
    depth = image.depth[usable]
    rows = np.flatnonzero(np.abs(depth - target_depth) <= search + 1e-12)
    if rows.size == 0:
        raise MeasurementFailure(f"no depth samples within {search * 1e3:.1f} mm of {target_depth * 1e3:.2f} mm")
    db = image.db_unclamped[:, usable]
    vals = image.values[:, usable][:, rows]
    i_peak, j_rel = np.unravel_index(np.argmax(vals), vals.shape)
    if vals[i_peak, j_rel] <= 0:
        raise MeasurementFailure("no envelope maximum near the target depth")
    profile = db[:, rows[j_rel]] - db[i_peak, rows[j_rel]]
    x = image.lateral

    def crossing(step: int) -> float:
        k = i_peak
        while 0 <= k + step < profile.size and profile[k + step] >= level_db:
            k += step
        if not 0 <= k + step < profile.size:
            raise MeasurementFailure("lateral profile never falls 6 dB below its peak")
        a, b = profile[k], profile[k + step]
        t = (a - level_db) / (a - b)
        return x[k] + t * (x[k + step] - x[k])

    return float((crossing(1) - crossing(-1)) * 1e3)


def _circle_mask(image: BeamformedImage, center, radius: float) -> np.ndarray:
    cx, cz = center
    tol = 1e-9
    if (
        cx - radius < image.lateral.min() - tol
        or cx + radius > image.lateral.max() + tol
        or cz - radius < image.depth.min() - tol
        or cz + radius > image.depth.max() + tol
    ):
        raise InvalidArgument(
            f"circle at ({cx * 1e3:.2f}, {cz * 1e3:.2f}) mm, r = {radius * 1e3:.2f} mm is not inside the image"
        )
    xx = image.lateral[:, None]
    zz = image.depth[None, :]
    mask = (xx - cx) ** 2 + (zz - cz) ** 2 <= radius**2
    mask[:, : image.guard] = False
    mask[:, image.values.shape[1] - image.guard :] = False
    return mask


def _roi_stats(image: BeamformedImage, roi: RoiPair):
    db = image.db_unclamped
    cyst = db[_circle_mask(image, roi.cyst_center, roi.radius)]
    back = db[_circle_mask(image, roi.background_center, roi.radius)]
    if cyst.size == 0 or back.size == 0:
        raise MeasurementFailure("an ROI circle contains no pixels")
    return cyst, back


def contrast_ratio(image: BeamformedImage, roi: RoiPair) -> float:
    """Background mean minus cyst mean of the dB image."""
    cyst, back = _roi_stats(image, roi)
    return float(np.mean(back) - np.mean(cyst))


def contrast_to_noise(image: BeamformedImage, roi: RoiPair) -> float:
    """Contrast ratio divided by the dB standard deviation of the background.

    The standard deviation uses the sample (n - 1) normalization.
    """
    cyst, back = _roi_stats(image, roi)
    if back.size < 2:
        raise MeasurementFailure("background ROI needs at least two pixels")
    sd = float(np.std(back, ddof=1))
    if sd == 0.0:
        raise MeasurementFailure("background ROI has zero standard deviation")
    return float(np.mean(back) - np.mean(cyst)) / sd


def estimate_cyst_radius(image: BeamformedImage, roi: RoiPair, n_rays: int = 64) -> float:
    """Mean cyst edge radius (mm) from rays cast out of the cyst center.

    Along each ray the dB profile is smoothed with a moving average one
    lateral grid step wide; the edge is the first radius where it reaches the
    midpoint between the cyst and background means. Rays that leave the
    image before crossing are ignored.
    """
    if n_rays < 1:
        raise InvalidArgument("n_rays must be positive")
    cyst, back = _roi_stats(image, roi)
    inside, outside = float(np.mean(cyst)), float(np.mean(back))
    if outside - inside < MIN_RADIUS_CONTRAST_DB:
        raise MeasurementFailure(
            f"cyst contrast {outside - inside:.2f} dB is below {MIN_RADIUS_CONTRAST_DB} dB; edge undefined"
        )
    threshold = 0.5 * (inside + outside)

    usable = image.usable_depth()
    interp = RegularGridInterpolator(
        (image.lateral, image.depth[usable]),
        image.db_unclamped[:, usable],
        bounds_error=False,
        fill_value=np.nan,
    )
    steps = [np.min(np.diff(a)) for a in (image.lateral, image.depth) if a.size > 1]
    coarse = max(steps) if steps else roi.radius / 10
    dr = min(steps) / 2 if steps else roi.radius / 50
    radii = np.arange(0.0, 2.0 * roi.radius + dr, dr)
    width = max(1, int(round(coarse / dr)))
    cx, cz = roi.cyst_center
    angles = 2.0 * np.pi * np.arange(n_rays) / n_rays
    pts = np.stack(
        [cx + np.cos(angles)[:, None] * radii[None, :], cz + np.sin(angles)[:, None] * radii[None, :]],
        axis=-1,
    )
    profiles = interp(pts.reshape(-1, 2)).reshape(n_rays, radii.size)

    edges = []
    for prof in profiles:
        valid = np.isfinite(prof)
        n_ok = int(np.argmin(valid)) if not valid.all() else prof.size
        if n_ok < 2:
            continue
        p = uniform_filter1d(prof[:n_ok], size=width, mode="nearest")
        above = np.flatnonzero(p >= threshold)
        if above.size == 0:
            continue
        k = above[0]
        if k == 0:
            edges.append(0.0)
            continue
        t = (threshold - p[k - 1]) / (p[k] - p[k - 1])
        edges.append(radii[k - 1] + t * dr)
    if not edges:
        raise MeasurementFailure("no ray crossed the cyst boundary inside the image")
    return float(np.mean(edges) * 1e3)


def _guarded(fn, *args):
    try:
        return fn(*args)
    except (MeasurementFailure, InvalidArgument) as exc:
        log.warning("measurement failed: %s", exc)
        return float("nan")


def point_report(image: BeamformedImage, depths: Sequence[float]) -> QualityReport:
    return QualityReport(fwhm_mm=tuple(_guarded(lateral_fwhm, image, z) for z in depths))


def cyst_report(image: BeamformedImage, centers: Sequence, radius: float, n_rays: int = 64) -> QualityReport:
    cr, cnr, rad, err = [], [], [], []
    for c in centers:
        roi = RoiPair.for_cyst(c, radius)
        cr.append(_guarded(contrast_ratio, image, roi))
        cnr.append(_guarded(contrast_to_noise, image, roi))
        r = _guarded(estimate_cyst_radius, image, roi, n_rays)
        rad.append(r)
        err.append(abs(r - radius * 1e3) if math.isfinite(r) else float("nan"))
    return QualityReport(cr_db=tuple(cr), cnr=tuple(cnr), radius_mm=tuple(rad), radius_err_mm=tuple(err))
