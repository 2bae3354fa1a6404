"""Vessel perturbation: moves or removes ships to build the pre-event vessel layout."""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from src import seeding
from src.raster import (
    OIL_LABEL,
    SEA_LABEL,
    BinaryMask,
    IntensityRaster,
    LabelMask,
    check_same_shape,
    connected_components,
    dilate,
)

if TYPE_CHECKING:
    from src.config import TahiConfig

logger = logging.getLogger(__name__)

# Translation draws per vessel before it falls back to removal
MAX_SHIFT_DRAWS = 16


@dataclass(frozen=True)
class VesselPerturbation:
    """
    Result of perturbing the vessels of one scene.

    ``image`` carries the pre-event vessel configuration, ``extra_mask`` the
    vacated footprints that must be inpainted and ``sites`` the destination
    footprints of moved vessels.
    """

    image: IntensityRaster
    extra_mask: BinaryMask
    labels: LabelMask
    sites: BinaryMask
    events: list[dict] = field(default_factory=list)

    def __iter__(self):
        return iter((self.image, self.extra_mask, self.labels))


def _draw_offset(rng: np.random.Generator, shift_min: int, shift_max: int) -> tuple[int, int]:
    magnitude = rng.uniform(shift_min, shift_max)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    return int(round(magnitude * math.sin(angle))), int(round(magnitude * math.cos(angle)))


def perturb_vessels(
    post: IntensityRaster, labels: LabelMask, config: "TahiConfig", scene_seed: int
) -> VesselPerturbation:
    """
    Remove or translate every 8-connected vessel component.

    Each component is removed with probability ``vessel_remove_prob``;
    otherwise up to MAX_SHIFT_DRAWS offsets of rounded length in
    [vessel_shift_min, vessel_shift_max] are tried until the destination is in
    bounds, on sea pixels and clear of the dilated oil mask and of vacated
    origins. A vessel that cannot be placed is removed. Origins always join
    the extra inpainting mask.
    """
    check_same_shape(post, labels)
    rng = seeding.stream(scene_seed, seeding.VESSELS)
    height, width = post.shape
    source = post.as_float()
    values = source.copy()
    current = labels.labels.copy()
    extra = np.zeros(post.shape, dtype=bool)
    sites = np.zeros(post.shape, dtype=bool)
    blocked = dilate(labels.mask_of(OIL_LABEL), config.dilation_radius).bits.copy()
    events = []

    for component in connected_components(labels.mask_of(config.vessel_label), connectivity=8):
        rows, cols = component.pixels[:, 0], component.pixels[:, 1]
        offset = None
        if rng.random() >= config.vessel_remove_prob:
            for _ in range(MAX_SHIFT_DRAWS):
                dy, dx = _draw_offset(rng, config.vessel_shift_min, config.vessel_shift_max)
                if not config.vessel_shift_min <= math.hypot(dy, dx) <= config.vessel_shift_max:
                    continue
                dest_rows, dest_cols = rows + dy, cols + dx
                if (dest_rows.min() < 0 or dest_cols.min() < 0
                        or dest_rows.max() >= height or dest_cols.max() >= width):
                    continue
                if (current[dest_rows, dest_cols] != SEA_LABEL).any() or blocked[dest_rows, dest_cols].any():
                    continue
                offset = (dy, dx)
                break

        extra[rows, cols] = True
        blocked[rows, cols] = True
        current[rows, cols] = SEA_LABEL
        if offset is None:
            events.append({"component": component.id, "action": "removed", "pixels": component.size})
            continue

        dest_rows, dest_cols = rows + offset[0], cols + offset[1]
        values[dest_rows, dest_cols] = source[rows, cols]
        current[dest_rows, dest_cols] = config.vessel_label
        sites[dest_rows, dest_cols] = True
        events.append({
            "component": component.id,
            "action": "moved",
            "pixels": component.size,
            "offset": list(offset),
        })

    if events:
        moved = sum(1 for e in events if e["action"] == "moved")
        logger.debug(f"Vessels: {moved} moved, {len(events) - moved} removed")
    return VesselPerturbation(
        image=IntensityRaster(values),
        extra_mask=BinaryMask(extra),
        labels=LabelMask(current),
        sites=BinaryMask(sites),
        events=events,
    )
