"""Synthetic spill scenes: speckled sea with a dark elliptical slick, optional vessels and reflector."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src import seeding
from src.errors import PreconditionError
from src.raster import (
    OIL_LABEL,
    SEA_LABEL,
    VESSEL_LABEL,
    BinaryMask,
    IntensityRaster,
    LabelMask,
    dilate,
)

logger = logging.getLogger(__name__)

# Sea pixels this close to the slick are left out of the clean-sea ROI
SEA_ROI_MARGIN = 8
REFLECTOR_HALF = 8


@dataclass(frozen=True)
class SyntheticScene:
    post: IntensityRaster
    labels: LabelMask
    oil: BinaryMask
    sea_roi: BinaryMask
    reflector: Optional[tuple[int, int]] = None


def _ellipse(shape: tuple[int, int], centre: tuple[float, float], axes: tuple[float, float], angle: float) -> np.ndarray:
    rows, cols = np.indices(shape, dtype=np.float64)
    dy, dx = rows - centre[0], cols - centre[1]
    u = dx * math.cos(angle) + dy * math.sin(angle)
    v = -dx * math.sin(angle) + dy * math.cos(angle)
    return (u / axes[1]) ** 2 + (v / axes[0]) ** 2 <= 1.0


def make_scene(
    seed: int,
    shape: tuple[int, int] = (96, 96),
    mean: float = 0.3,
    looks: int = 4,
    slick_fraction: float = 0.4,
    vessels: int = 0,
    vessel_size: int = 3,
    vessel_gain: float = 2.5,
    reflector: bool = False,
) -> SyntheticScene:
    """
    Build one annotated post-event scene.

    The sea is ``mean`` times L-look Gamma speckle. An ellipse covering a few
    percent of the frame is darkened to ``slick_fraction`` of the sea and
    labelled oil. Vessels are bright ``vessel_size`` squares on open sea.
    The optional point reflector carries sinc² side lobes.
    """
    height, width = shape
    if min(shape) < 32:
        raise PreconditionError(f"synthetic scenes need at least 32x32 pixels, got {shape}")
    rng = seeding.stream(seed, seeding.SCENE)
    values = mean * rng.gamma(shape=looks, scale=1.0 / looks, size=shape)
    labels = np.full(shape, SEA_LABEL, dtype=np.uint8)

    centre = (rng.uniform(0.35, 0.65) * height, rng.uniform(0.35, 0.65) * width)
    axes = (rng.uniform(0.06, 0.1) * height, rng.uniform(0.12, 0.2) * width)
    oil = _ellipse(shape, centre, axes, rng.uniform(0.0, math.pi))
    values[oil] *= slick_fraction
    labels[oil] = OIL_LABEL
    near_oil = dilate(BinaryMask(oil), SEA_ROI_MARGIN).bits
    excluded = near_oil.copy()

    placed = 0
    for _ in range(50 * vessels):
        if placed == vessels:
            break
        r = int(rng.integers(1, height - vessel_size - 1))
        c = int(rng.integers(1, width - vessel_size - 1))
        window = (slice(r - 1, r + vessel_size + 1), slice(c - 1, c + vessel_size + 1))
        if excluded[window].any():
            continue
        footprint = (slice(r, r + vessel_size), slice(c, c + vessel_size))
        values[footprint] = mean * vessel_gain * rng.gamma(looks, 1.0 / looks, (vessel_size, vessel_size))
        labels[footprint] = VESSEL_LABEL
        excluded[window] = True
        placed += 1
    if placed < vessels:
        logger.warning(f"Placed only {placed} of {vessels} vessel(s)")

    peak = None
    if reflector:
        for _ in range(100):
            r = int(rng.integers(REFLECTOR_HALF, height - REFLECTOR_HALF))
            c = int(rng.integers(REFLECTOR_HALF, width - REFLECTOR_HALF))
            window = (slice(r - REFLECTOR_HALF, r + REFLECTOR_HALF + 1),
                      slice(c - REFLECTOR_HALF, c + REFLECTOR_HALF + 1))
            if excluded[window].any():
                continue
            offsets = np.arange(-REFLECTOR_HALF, REFLECTOR_HALF + 1) / 1.5
            response = np.outer(np.sinc(offsets) ** 2, np.sinc(offsets) ** 2)
            values[window] += 40.0 * mean * response
            excluded[window] = True
            peak = (r, c)
            break

    sea_roi = (labels == SEA_LABEL) & ~excluded
    return SyntheticScene(
        post=IntensityRaster(values),
        labels=LabelMask(labels),
        oil=BinaryMask(oil),
        sea_roi=BinaryMask(sea_roi),
        reflector=peak,
    )
