"""Restoration quality metrics: ENL, CNR, side-lobe ratios and residual Dice."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from src.errors import PreconditionError
from src.raster import BinaryMask, IntensityRaster, check_same_shape, exterior_ring

logger = logging.getLogger(__name__)

# Half-width of the row/column window around the strongest reflector
SIDELOBE_HALF_WINDOW = 32
RESIDUAL_PERCENTILE = 10.0
MIN_ENL_PIXELS = 2
MIN_CNR_PIXELS = 40


@dataclass(frozen=True)
class MetricValue:
    """A metric result that may be undefined (reported as null, never NaN)."""

    value: Optional[float]
    defined: bool
    reason: Optional[str] = None

    @classmethod
    def of(cls, value: float) -> "MetricValue":
        return cls(float(value), True)

    @classmethod
    def undefined(cls, reason: str) -> "MetricValue":
        return cls(None, False, reason)

    def to_dict(self) -> dict:
        return {"value": self.value, "defined": self.defined}


@dataclass(frozen=True)
class SidelobeRatios:
    islr_db: MetricValue
    pslr_db: MetricValue


@dataclass(frozen=True)
class RestorationReport:
    """The five restoration metrics for one image."""

    enl: MetricValue
    cnr: MetricValue
    islr_db: MetricValue
    pslr_db: MetricValue
    residual_dice: MetricValue
    roi_descriptor: str

    def to_dict(self) -> dict:
        return {
            "enl": self.enl.to_dict(),
            "cnr": self.cnr.to_dict(),
            "islr_db": self.islr_db.to_dict(),
            "pslr_db": self.pslr_db.to_dict(),
            "residual_dice": self.residual_dice.to_dict(),
            "roi": self.roi_descriptor,
            "residual_detector": "threshold detector",
        }


def enl(image: IntensityRaster, roi: BinaryMask) -> MetricValue:
    """Equivalent number of looks, mean² / unbiased variance over ``roi``."""
    values = image.values(roi)
    if values.size < MIN_ENL_PIXELS:
        raise PreconditionError(f"ENL needs at least {MIN_ENL_PIXELS} ROI pixels, got {values.size}")
    variance = values.var(ddof=1)
    if variance == 0:
        return MetricValue.undefined("homogeneous")
    return MetricValue.of(values.mean() ** 2 / variance)


def cnr(image: IntensityRaster, roi: BinaryMask) -> MetricValue:
    """
    Contrast-to-noise ratio over ``roi``.

    (mean of the top 5% values - mean of the bottom 5%) / unbiased standard
    deviation, with ceil(5% of n) values in each tail.
    """
    values = image.values(roi)
    n = values.size
    if n < MIN_CNR_PIXELS:
        raise PreconditionError(f"CNR needs at least {MIN_CNR_PIXELS} ROI pixels, got {n}")
    sigma = values.std(ddof=1)
    if sigma == 0:
        return MetricValue.undefined("homogeneous")
    tail = -(-n // 20)
    ordered = np.sort(values)
    return MetricValue.of((ordered[-tail:].mean() - ordered[:tail].mean()) / sigma)


def _first_null(profile: np.ndarray, peak: int, step: int) -> Optional[int]:
    """Index of the first interior local minimum walking away from the peak."""
    j = peak
    while 0 <= j + step < len(profile) and profile[j + step] < profile[j]:
        j += step
    if j + step < 0 or j + step >= len(profile):
        return None
    return j


def profile_ratios(profile: np.ndarray, peak: int) -> Optional[tuple[float, float]]:
    """
    (ISLR, PSLR) in dB of one 1D profile, or None when undefined.

    The main lobe runs from the peak to the first null on each side (nulls
    included); a side with no null belongs wholly to the main lobe.
    """
    profile = np.asarray(profile, dtype=np.float64)
    power = np.square(profile)
    if power[peak] == 0:
        return None
    left = _first_null(profile, peak, -1)
    right = _first_null(profile, peak, +1)
    if left is None and right is None:
        return None

    main = np.zeros(len(profile), dtype=bool)
    main[(0 if left is None else left):(len(profile) if right is None else right + 1)] = True
    side_power = power[~main]
    if side_power.size == 0 or side_power.sum() == 0:
        return None
    islr = 10.0 * math.log10(side_power.sum() / power[main].sum())
    pslr = 10.0 * math.log10(side_power.max() / power[peak])
    return islr, pslr


def sidelobe_ratios(image: IntensityRaster) -> SidelobeRatios:
    """
    ISLR and PSLR around the brightest pixel, averaged over its row and column profiles.

    Profiles span SIDELOBE_HALF_WINDOW pixels on each side of the peak,
    clamped at the frame border. Ties for the maximum go to the first pixel
    in row-major order.
    """
    values = image.pixels
    row, col = np.unravel_index(int(np.argmax(values)), values.shape)
    half = SIDELOBE_HALF_WINDOW

    results = []
    for line, centre in ((values[row, :], col), (values[:, col], row)):
        lo = max(0, centre - half)
        hi = min(len(line), centre + half + 1)
        ratios = profile_ratios(line[lo:hi], centre - lo)
        if ratios is not None:
            results.append(ratios)

    if not results:
        reason = "no side lobe around the strongest reflector"
        return SidelobeRatios(MetricValue.undefined(reason), MetricValue.undefined(reason))
    islr, pslr = np.mean(results, axis=0)
    return SidelobeRatios(MetricValue.of(islr), MetricValue.of(pslr))


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """2|pred ∩ gt| / (|pred| + |gt|); 1 when both masks are empty."""
    check_same_shape(pred, gt)
    total = pred.count + gt.count
    if total == 0:
        return 1.0
    return 2.0 * int((pred.bits & gt.bits).sum()) / total


def residual_detector(image: IntensityRaster, omega: BinaryMask, ring_width: int) -> BinaryMask:
    """
    Flag oil-like pixels: those in omega ∪ ring darker than the ring's 10th percentile.

    Stands in for a learned spill segmenter when measuring how detectable the
    restored region still is.
    """
    check_same_shape(image, omega)
    if not omega.any():
        raise PreconditionError("residual detector needs a non-empty region")
    ring = exterior_ring(omega, ring_width)
    if not ring.any():
        return BinaryMask.empty(omega.shape, note=ring.note)
    threshold = np.percentile(image.values(ring), RESIDUAL_PERCENTILE)
    return BinaryMask((omega.bits | ring.bits) & (image.pixels < threshold))


def residual_dice(image: IntensityRaster, omega: BinaryMask, ring_width: int) -> float:
    flagged = residual_detector(image, omega, ring_width)
    return dice(flagged & omega, omega)


def _guarded(metric: Callable[[IntensityRaster, BinaryMask], MetricValue], image, roi) -> MetricValue:
    try:
        return metric(image, roi)
    except PreconditionError as e:
        return MetricValue.undefined(str(e))


def _report(image: IntensityRaster, roi: BinaryMask, omega: BinaryMask, ring_width: int) -> RestorationReport:
    ratios = sidelobe_ratios(image)
    if omega.any():
        residual = MetricValue.of(residual_dice(image, omega, ring_width))
    else:
        residual = MetricValue.undefined("empty region")
    return RestorationReport(
        enl=_guarded(enl, image, roi),
        cnr=_guarded(cnr, image, roi),
        islr_db=ratios.islr_db,
        pslr_db=ratios.pslr_db,
        residual_dice=residual,
        roi_descriptor=f"sea_roi ∪ omega ({roi.count} px)",
    )


def restoration_report(
    original: IntensityRaster,
    restored: IntensityRaster,
    omega: BinaryMask,
    sea_roi: BinaryMask,
    ring_width: int = 5,
) -> tuple[RestorationReport, RestorationReport]:
    """
    Reports for the original and the restored image over the same ROIs.

    ENL and CNR use sea_roi ∪ omega, side-lobe ratios the whole frame and
    residual Dice the threshold detector with a ring of ``ring_width``.
    """
    check_same_shape(original, restored, omega, sea_roi)
    if (sea_roi.bits & omega.bits).any():
        raise PreconditionError("sea ROI must be disjoint from the restored region")
    roi = sea_roi | omega
    return (
        _report(original, roi, omega, ring_width),
        _report(restored, roi, omega, ring_width),
    )


def average_reports(reports: Iterable[RestorationReport]) -> RestorationReport:
    """Per-metric mean over the reports where the metric is defined."""
    reports = list(reports)
    if not reports:
        raise PreconditionError("nothing to average")

    def mean_of(name: str) -> MetricValue:
        defined = [getattr(r, name).value for r in reports if getattr(r, name).defined]
        if not defined:
            return MetricValue.undefined(f"{name} undefined on every scene")
        return MetricValue.of(float(np.mean(defined)))

    return RestorationReport(
        enl=mean_of("enl"),
        cnr=mean_of("cnr"),
        islr_db=mean_of("islr_db"),
        pslr_db=mean_of("pslr_db"),
        residual_dice=mean_of("residual_dice"),
        roi_descriptor=f"mean over {len(reports)} scene(s)",
    )
