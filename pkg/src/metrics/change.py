"""Diff-Otsu change detection baseline and pixel-level change-detection scores."""

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from src.errors import PreconditionError, UndefinedThresholdError
from src.metrics.quality import MetricValue
from src.raster import BinaryMask, IntensityRaster, check_same_shape

logger = logging.getLogger(__name__)

DEFAULT_BINS = 256
SCORE_NAMES = ("precision", "recall", "f1", "iou")


def abs_diff(pre: IntensityRaster, post: IntensityRaster) -> IntensityRaster:
    """Per-pixel |post - pre|."""
    check_same_shape(pre, post)
    return IntensityRaster(np.abs(post.as_float() - pre.as_float()))


def otsu_bin_indices(values: np.ndarray, bins: int) -> np.ndarray:
    """
    Bin of every value after min-max normalisation to [0, 1].

    Bin k holds k/B < v <= (k+1)/B; v == 0 falls in bin 0.
    """
    lo, hi = values.min(), values.max()
    normalised = (values - lo) / (hi - lo)
    return np.clip(np.ceil(normalised * bins).astype(np.int64) - 1, 0, bins - 1)


def between_class_variance(values: np.ndarray, indices: np.ndarray, bins: int) -> np.ndarray:
    """
    w0 * w1 * (mu0 - mu1)^2 for every split "bins 0..k vs k+1..B-1".

    Class means use the actual values. Splits leaving a class empty score -inf.
    """
    counts = np.bincount(indices, minlength=bins)[:-1].cumsum()
    sums = np.bincount(indices, weights=values, minlength=bins)[:-1].cumsum()
    n, total = values.size, values.sum()
    scores = np.full(bins - 1, -np.inf)
    valid = (counts > 0) & (counts < n)
    c, s = counts[valid], sums[valid]
    mu0 = s / c
    mu1 = (total - s) / (n - c)
    scores[valid] = (c / n) * (1 - c / n) * np.square(mu0 - mu1)
    return scores


def _otsu_split(image: IntensityRaster, bins: int) -> tuple[int, np.ndarray, float, float]:
    if bins < 2:
        raise PreconditionError(f"Otsu needs at least 2 bins, got {bins}")
    values = image.as_float().ravel()
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise UndefinedThresholdError("image is constant; no threshold separates two classes")
    indices = otsu_bin_indices(values, bins)
    best = int(np.argmax(between_class_variance(values, indices, bins)))
    return best, indices, lo, hi


def otsu_threshold(image: IntensityRaster, bins: int = DEFAULT_BINS) -> float:
    """
    Otsu threshold on the original intensity scale.

    Returns the upper edge of the last class-0 bin; the smallest edge wins
    ties.
    """
    best, _, lo, hi = _otsu_split(image, bins)
    return lo + (best + 1) / bins * (hi - lo)


def diff_otsu(pre: IntensityRaster, post: IntensityRaster, bins: int = DEFAULT_BINS) -> BinaryMask:
    """Change mask |post - pre| > Otsu threshold; empty when the difference is constant."""
    difference = abs_diff(pre, post)
    try:
        best, indices, _, _ = _otsu_split(difference, bins)
    except UndefinedThresholdError:
        return BinaryMask.empty(difference.shape, note="constant difference image")
    return BinaryMask((indices > best).reshape(difference.shape))


def _ratio(numerator: int, denominator: int, name: str) -> MetricValue:
    if denominator == 0:
        return MetricValue.undefined(f"{name}: zero denominator")
    return MetricValue.of(numerator / denominator)


@dataclass(frozen=True)
class CDEvalReport:
    """Pixel-level confusion counts and the derived scores."""

    tp: int
    fp: int
    fn: int
    tn: int
    oil_gt: bool = False

    @property
    def precision(self) -> MetricValue:
        return _ratio(self.tp, self.tp + self.fp, "precision")

    @property
    def recall(self) -> MetricValue:
        return _ratio(self.tp, self.tp + self.fn, "recall")

    @property
    def f1(self) -> MetricValue:
        return _ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn, "f1")

    @property
    def iou(self) -> MetricValue:
        return _ratio(self.tp, self.tp + self.fp + self.fn, "iou")

    def __add__(self, other: "CDEvalReport") -> "CDEvalReport":
        return CDEvalReport(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
            self.oil_gt and other.oil_gt,
        )

    def to_dict(self) -> dict:
        data = {name: getattr(self, name).to_dict() for name in SCORE_NAMES}
        if self.oil_gt:
            data["osiou"] = self.iou.to_dict()
        data.update(tp=self.tp, fp=self.fp, fn=self.fn, tn=self.tn)
        return data


def cd_eval(pred: BinaryMask, gt: BinaryMask, oil_gt: bool = False) -> CDEvalReport:
    """Confusion counts over the full frame. With ``oil_gt`` the IoU is also reported as OSIoU."""
    check_same_shape(pred, gt)
    p, g = pred.bits, gt.bits
    return CDEvalReport(
        tp=int((p & g).sum()),
        fp=int((p & ~g).sum()),
        fn=int((~p & g).sum()),
        tn=int((~p & ~g).sum()),
        oil_gt=oil_gt,
    )


def summarize_runs(reports: Iterable[CDEvalReport]) -> dict:
    """
    Each run plus the mean and population standard deviation of every score.

    A score enters the statistics only for the runs where it is defined.
    """
    reports = list(reports)
    if not reports:
        raise PreconditionError("no runs to summarize")
    names = SCORE_NAMES + (("osiou",) if all(r.oil_gt for r in reports) else ())
    mean, std = {}, {}
    for name in names:
        values = [getattr(r, "iou" if name == "osiou" else name) for r in reports]
        defined = [v.value for v in values if v.defined]
        if defined:
            mean[name] = MetricValue.of(np.mean(defined)).to_dict()
            std[name] = MetricValue.of(np.std(defined)).to_dict()
        else:
            mean[name] = std[name] = MetricValue.undefined(f"{name} undefined in every run").to_dict()
    return {"runs": [r.to_dict() for r in reports], "mean": mean, "std": std}


def benchmark(pairs: Iterable[tuple[IntensityRaster, IntensityRaster, BinaryMask]], bins: int = DEFAULT_BINS) -> dict:
    """
    Diff-Otsu over a set of (pre, post, oil ground truth) pairs.

    Reports pooled (micro) counts and scores plus the per-scene mean of each
    defined score.
    """
    reports = []
    for pre, post, gt in pairs:
        reports.append(cd_eval(diff_otsu(pre, post, bins), gt, oil_gt=True))
    if not reports:
        raise PreconditionError("benchmark needs at least one pair")
    pooled = sum(reports[1:], reports[0])
    per_scene = summarize_runs(reports)
    logger.info(f"Diff-Otsu benchmark over {len(reports)} pair(s): pooled OSIoU {pooled.iou.value}")
    return {"pairs": len(reports), "pooled": pooled.to_dict(), "per_scene_mean": per_scene["mean"]}
