"""PatchMatch inpainting of masked regions, run coarse to fine."""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage

from src import seeding
from src.errors import InvariantViolation, PreconditionError
from src.raster import BinaryMask, IntensityRaster, check_same_shape

if TYPE_CHECKING:
    from src.config import TahiConfig

logger = logging.getLogger(__name__)

# Random-search candidates landing outside the known region are redrawn this many times
SEARCH_RETRIES = 8
# Masked pixels whose random-search offsets are drawn at once
JITTER_BLOCK = 1024


@dataclass(frozen=True)
class PatchSpec:
    """Square patch of side 2r+1."""

    radius: int = 3

    def __post_init__(self):
        if self.radius < 1:
            raise PreconditionError(f"patch radius must be >= 1, got {self.radius}")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1


@dataclass(frozen=True, eq=False)
class NearestNeighborField:
    """Best source coordinate and patch distance for every masked pixel."""

    height: int
    width: int
    targets: np.ndarray  # (n, 2) row/col of masked pixels, raster order
    sources: np.ndarray  # (n, 2) row/col in the known region
    distances: np.ndarray  # (n,)

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=np.int64).reshape(-1, 2)
        sources = np.asarray(self.sources, dtype=np.int64).reshape(-1, 2)
        distances = np.asarray(self.distances, dtype=np.float64).reshape(-1)
        if not (len(targets) == len(sources) == len(distances)):
            raise PreconditionError("targets, sources and distances must have equal length")
        for name, array in (("targets", targets), ("sources", sources), ("distances", distances)):
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def mean_distance(self) -> float:
        return float(self.distances.mean()) if len(self) else 0.0

    def verify(self, image: IntensityRaster, mask: BinaryMask, spec: PatchSpec) -> None:
        """Check the field against its image and mask; raise InvariantViolation if stale."""
        if (self.height, self.width) != mask.shape:
            raise InvariantViolation("field dimensions differ from the mask")
        if not np.array_equal(self.targets, np.argwhere(mask.bits)):
            raise InvariantViolation("field entries do not cover exactly the masked pixels")
        if len(self) and mask.bits[self.sources[:, 0], self.sources[:, 1]].any():
            raise InvariantViolation("a source coordinate lies inside the mask")
        scorer = _PatchScorer(image.as_float(), ~mask.bits, spec.radius)
        for (ty, tx), (sy, sx), d in zip(self.targets, self.sources, self.distances):
            if scorer(ty, tx, sy, sx) != d:
                raise InvariantViolation(f"stale distance at target ({ty}, {tx})")


@dataclass(frozen=True)
class PyramidLevel:
    raster: IntensityRaster
    mask: BinaryMask
    scale: int


class _PatchScorer:
    """Mean squared patch difference over in-bounds offsets with a valid source pixel."""

    def __init__(self, values: np.ndarray, valid: np.ndarray, radius: int):
        self.side = 2 * radius + 1
        self.values = np.pad(values, radius)
        self.valid = np.pad(valid, radius)
        self.inside = np.pad(np.ones(values.shape, dtype=bool), radius)

    def __call__(self, ay: int, ax: int, by: int, bx: int) -> float:
        s = self.side
        weight = self.inside[ay:ay + s, ax:ax + s] & self.valid[by:by + s, bx:bx + s]
        count = np.count_nonzero(weight)
        if count == 0:
            return math.inf
        diff = self.values[ay:ay + s, ax:ax + s][weight] - self.values[by:by + s, bx:bx + s][weight]
        return float(diff @ diff) / count


def patch_distance(
    image: IntensityRaster,
    validity: BinaryMask,
    center_a: tuple[int, int],
    center_b: tuple[int, int],
    spec: PatchSpec,
) -> float:
    """
    Mean squared difference between the patches centred at ``center_a`` and ``center_b``.

    Only offsets where both pixels are in bounds and the ``center_b`` pixel is
    valid contribute. Returns ``inf`` when none do.
    """
    check_same_shape(image, validity)
    scorer = _PatchScorer(image.as_float(), validity.bits, spec.radius)
    (ay, ax), (by, bx) = center_a, center_b
    return scorer(int(ay), int(ax), int(by), int(bx))


def _search_radii(height: int, width: int) -> list[int]:
    radii = []
    radius = max(height, width)
    while radius >= 1:
        radii.append(radius)
        radius //= 2
    return radii


def patchmatch(
    image: IntensityRaster,
    mask: BinaryMask,
    spec: PatchSpec,
    iterations: int,
    rng_seed: int,
    level: int = 0,
) -> NearestNeighborField:
    """
    Approximate the nearest-neighbour field of the masked pixels over the known region.

    Values currently stored inside the mask are used as the target patches.
    Sweeps alternate forward/backward scanline propagation; each pixel then
    runs a random search whose radius halves from max(height, width) to 1.

    Raises:
        PreconditionError: the known region is empty or iterations < 1
    """
    check_same_shape(image, mask)
    if iterations < 1:
        raise PreconditionError(f"iterations must be >= 1, got {iterations}")
    known = ~mask.bits
    if not known.any():
        raise PreconditionError("known region is empty; nothing to copy from")

    height, width = mask.shape
    targets = np.argwhere(mask.bits)
    count = len(targets)
    if count == 0:
        return NearestNeighborField(height, width, targets, targets, np.zeros(0))

    candidates = np.argwhere(known)
    picks = seeding.stream(rng_seed, seeding.PATCHMATCH, level, 0).integers(len(candidates), size=count)
    sources = candidates[picks].tolist()
    scorer = _PatchScorer(image.as_float(), known, spec.radius)
    distances = [scorer(ty, tx, sy, sx) for (ty, tx), (sy, sx) in zip(targets.tolist(), sources)]

    entry = np.full(mask.shape, -1, dtype=np.int64)
    entry[targets[:, 0], targets[:, 1]] = np.arange(count)
    radii = _search_radii(height, width)
    target_list = targets.tolist()

    for sweep in range(iterations):
        rng = seeding.stream(rng_seed, seeding.PATCHMATCH, level, sweep + 1)
        step = 1 if sweep % 2 == 0 else -1
        order = range(count) if step == 1 else range(count - 1, -1, -1)

        jitter = None
        for position, k in enumerate(order):
            if position % JITTER_BLOCK == 0:
                block = min(JITTER_BLOCK, count - position)
                jitter = rng.uniform(-1.0, 1.0, size=(block, len(radii), SEARCH_RETRIES, 2))
            offsets = jitter[position % JITTER_BLOCK].tolist()
            y, x = target_list[k]
            best_y, best_x = sources[k]
            best_d = distances[k]

            # Propagation from the already-visited neighbours of this sweep
            for dy, dx in ((0, -step), (-step, 0)):
                ny, nx = y + dy, x + dx
                if not (0 <= ny < height and 0 <= nx < width) or entry[ny, nx] < 0:
                    continue
                sy, sx = sources[entry[ny, nx]]
                cy, cx = sy - dy, sx - dx
                if 0 <= cy < height and 0 <= cx < width and known[cy, cx]:
                    d = scorer(y, x, cy, cx)
                    if d < best_d:
                        best_y, best_x, best_d = cy, cx, d

            # Random search around the current best, shrinking radius
            for r_index, radius in enumerate(radii):
                for oy, ox in offsets[r_index]:
                    cy = best_y + int(round(radius * oy))
                    cx = best_x + int(round(radius * ox))
                    if 0 <= cy < height and 0 <= cx < width and known[cy, cx]:
                        break
                else:
                    continue
                if (cy, cx) == (best_y, best_x):
                    continue
                d = scorer(y, x, cy, cx)
                if d < best_d:
                    best_y, best_x, best_d = cy, cx, d

            sources[k] = [best_y, best_x]
            distances[k] = best_d

        logger.debug(
            f"PatchMatch level {level} sweep {sweep + 1}/{iterations}: "
            f"mean distance {np.mean(distances):.6g}"
        )

    return NearestNeighborField(height, width, targets, sources, distances)


def fill_from_nnf(
    image: IntensityRaster,
    mask: BinaryMask,
    nnf: NearestNeighborField,
    spec: PatchSpec,
) -> IntensityRaster:
    """
    Fill masked pixels by weighted patch voting.

    Every field entry proposes its source patch for the masked pixels its
    footprint covers, weighted by exp(-d / sigma) with sigma the median
    nonzero distance (uniform weights when all distances are zero). Only
    known source pixels vote. Unmasked pixels are copied verbatim.
    """
    check_same_shape(image, mask)
    if not np.array_equal(nnf.targets, np.argwhere(mask.bits)):
        raise PreconditionError("field entries must cover exactly the masked pixels")
    if len(nnf) == 0:
        return IntensityRaster(image.pixels)

    values = image.as_float()
    known = ~mask.bits
    height, width = mask.shape
    distances = nnf.distances
    positive = distances[(distances > 0) & np.isfinite(distances)]
    if positive.size:
        weights = np.exp(-distances / float(np.median(positive)))
    else:
        weights = np.ones(len(nnf))

    weighted_sum = np.zeros(height * width)
    weight_total = np.zeros(height * width)
    plain_sum = np.zeros(height * width)
    plain_count = np.zeros(height * width)
    r = spec.radius
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            ty, tx = nnf.targets[:, 0] + dy, nnf.targets[:, 1] + dx
            sy, sx = nnf.sources[:, 0] + dy, nnf.sources[:, 1] + dx
            ok = (
                (ty >= 0) & (ty < height) & (tx >= 0) & (tx < width)
                & (sy >= 0) & (sy < height) & (sx >= 0) & (sx < width)
            )
            ok[ok] = mask.bits[ty[ok], tx[ok]] & known[sy[ok], sx[ok]]
            flat = ty[ok] * width + tx[ok]
            proposals = values[sy[ok], sx[ok]]
            np.add.at(weighted_sum, flat, weights[ok] * proposals)
            np.add.at(weight_total, flat, weights[ok])
            np.add.at(plain_sum, flat, proposals)
            np.add.at(plain_count, flat, 1.0)

    flat_targets = nnf.targets[:, 0] * width + nnf.targets[:, 1]
    total = weight_total[flat_targets]
    # Underflowed weights fall back to an unweighted vote
    with np.errstate(invalid="ignore", divide="ignore"):
        filled = np.where(
            total > 0,
            weighted_sum[flat_targets] / total,
            plain_sum[flat_targets] / plain_count[flat_targets],
        )
    values[nnf.targets[:, 0], nnf.targets[:, 1]] = filled
    return IntensityRaster(values)


def _block_sum(array: np.ndarray) -> np.ndarray:
    height, width = array.shape
    padded = np.pad(array, ((0, height % 2), (0, width % 2)))
    return padded.reshape(padded.shape[0] // 2, 2, padded.shape[1] // 2, 2).sum(axis=(1, 3))


def _downsample(level: PyramidLevel) -> PyramidLevel:
    known = (~level.mask.bits).astype(np.float64)
    sums = _block_sum(level.raster.as_float() * known)
    counts = _block_sum(known)
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    mask = _block_sum(level.mask.bits.astype(np.int64)) > 0
    return PyramidLevel(IntensityRaster(values), BinaryMask(mask), level.scale * 2)


def build_pyramid(image: IntensityRaster, mask: BinaryMask, pyramid_min: int) -> list[PyramidLevel]:
    """
    Halve the image until the next level's smaller side would drop below ``pyramid_min``.

    A coarse pixel is masked iff any pixel it covers is masked; its value is
    the mean of the known pixels it covers. Levels whose known region would be
    empty are not built.
    """
    levels = [PyramidLevel(image, mask, 1)]
    while True:
        height, width = levels[-1].mask.shape
        if min(math.ceil(height / 2), math.ceil(width / 2)) < pyramid_min:
            break
        coarser = _downsample(levels[-1])
        if coarser.mask.is_full():
            break
        levels.append(coarser)
    return levels


def _upsample(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    rows = (np.arange(shape[0]) + 0.5) / 2.0 - 0.5
    cols = (np.arange(shape[1]) + 0.5) / 2.0 - 0.5
    grid = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(values, grid, order=1, mode="nearest")


def inpaint(
    image: IntensityRaster,
    mask: BinaryMask,
    config: "TahiConfig",
    rng_seed: int,
) -> IntensityRaster:
    """
    Reconstruct the masked pixels coarse to fine.

    The coarsest level starts from the mean of the known region; each level
    runs PatchMatch and voting, and its bilinear upsampling seeds the masked
    pixels of the next finer level. Pixels outside the mask are returned
    unchanged.
    """
    check_same_shape(image, mask)
    if not mask.any():
        return IntensityRaster(image.pixels)
    if mask.is_full():
        raise PreconditionError("known region is empty; nothing to copy from")

    spec = config.patch_spec()
    levels = build_pyramid(image, mask, config.pyramid_min)
    logger.info(
        f"Inpainting {mask.count} pixels over {len(levels)} pyramid level(s), "
        f"patch {spec.side}x{spec.side}, {config.pm_iterations} sweeps per level"
    )

    seed_values = None
    filled = image
    for depth in range(len(levels) - 1, -1, -1):
        level = levels[depth]
        values = level.raster.as_float()
        holes = level.mask.bits
        if seed_values is None:
            values[holes] = values[~holes].mean()
        else:
            values[holes] = seed_values[holes]
        seeded = IntensityRaster(values)

        nnf = patchmatch(seeded, level.mask, spec, config.pm_iterations, rng_seed, level=depth)
        filled = fill_from_nnf(seeded, level.mask, nnf, spec)
        logger.debug(f"Level {depth} (1/{level.scale}): mean patch distance {nnf.mean_distance:.6g}")

        if depth > 0:
            seed_values = _upsample(filled.as_float(), levels[depth - 1].mask.shape)

    result = image.as_float()
    result[mask.bits] = filled.as_float()[mask.bits]
    return IntensityRaster(result)
