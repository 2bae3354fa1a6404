"""Raster containers, file formats and mask morphology used by every stage."""

import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from src.errors import InputError, PreconditionError, RasterFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Float-raster container: magic, version byte, width, height (uint32 LE),
# then width*height little-endian float32 values, row-major.
FRAS_MAGIC = b"FRAS"
FRAS_VERSION = 1
FRAS_HEADER = struct.Struct("<4sBII")

# M4D label convention
SEA_LABEL = 0
OIL_LABEL = 1
LOOKALIKE_LABEL = 2
VESSEL_LABEL = 3
LAND_LABEL = 4
MAX_LABEL = LAND_LABEL

_PNG_MAX_CODE = {8: 255, 16: 65535}


class RasterFormat(str, Enum):
    """On-disk raster encodings."""

    FLOAT = "float-raster"
    PNG = "gray-png"

    @classmethod
    def for_path(cls, path: PathLike) -> "RasterFormat":
        """Infer the format from a file suffix (.fras or .png)."""
        suffix = Path(path).suffix.lower()
        if suffix == ".fras":
            return cls.FLOAT
        if suffix == ".png":
            return cls.PNG
        raise InputError(f"cannot infer raster format from '{path}' (expected .fras or .png)")


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _first_index(flags: np.ndarray) -> int:
    return int(np.flatnonzero(flags.ravel())[0])


@dataclass(frozen=True, eq=False)
class IntensityRaster:
    """Nonnegative linear-scale intensities, stored as a read-only float32 grid."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.array(self.pixels, dtype=np.float32)
        if pixels.ndim != 2 or pixels.size == 0:
            raise PreconditionError(
                f"raster must be a non-empty 2D grid, got shape {pixels.shape}"
            )
        bad = ~np.isfinite(pixels) | (pixels < 0)
        if bad.any():
            index = _first_index(bad)
            raise PreconditionError(
                f"pixel {index} is {float(pixels.ravel()[index])!r}; "
                "intensities must be finite and >= 0"
            )
        object.__setattr__(self, "pixels", _frozen(pixels))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def as_float(self) -> np.ndarray:
        """Writable float64 copy for computation."""
        return self.pixels.astype(np.float64)

    def values(self, mask: "BinaryMask") -> np.ndarray:
        """Float64 values of the pixels selected by ``mask`` in row-major order."""
        check_same_shape(self, mask)
        return self.pixels[mask.bits].astype(np.float64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntensityRaster):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel membership flags. ``note`` carries metadata about how it was made."""

    bits: np.ndarray
    note: Optional[str] = None

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.size == 0:
            raise PreconditionError(f"mask must be a non-empty 2D grid, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits))

    @classmethod
    def empty(cls, shape: tuple[int, int], note: Optional[str] = None) -> "BinaryMask":
        return cls(np.zeros(shape, dtype=bool), note=note)

    @classmethod
    def full(cls, shape: tuple[int, int]) -> "BinaryMask":
        return cls(np.ones(shape, dtype=bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def size(self) -> int:
        return self.bits.size

    def any(self) -> bool:
        return bool(self.bits.any())

    def is_full(self) -> bool:
        return bool(self.bits.all())

    def minus(self, other: "BinaryMask") -> "BinaryMask":
        check_same_shape(self, other)
        return BinaryMask(self.bits & ~other.bits)

    def __or__(self, other: "BinaryMask") -> "BinaryMask":
        check_same_shape(self, other)
        return BinaryMask(self.bits | other.bits)

    def __and__(self, other: "BinaryMask") -> "BinaryMask":
        check_same_shape(self, other)
        return BinaryMask(self.bits & other.bits)

    def __invert__(self) -> "BinaryMask":
        return BinaryMask(~self.bits)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Per-pixel class ids in {0..4} (sea, oil, look-alike, vessel, land)."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise PreconditionError(f"label mask must be a non-empty 2D grid, got shape {labels.shape}")
        if not (np.issubdtype(labels.dtype, np.integer) or labels.dtype == bool):
            raise PreconditionError(f"label mask must hold integers, got {labels.dtype}")
        bad = (labels < 0) | (labels > MAX_LABEL)
        if bad.any():
            index = _first_index(bad)
            raise PreconditionError(
                f"label {int(labels.ravel()[index])} at pixel {index} is outside 0..{MAX_LABEL}"
            )
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask_of(self, label: int) -> BinaryMask:
        """Binary mask of the pixels carrying ``label``."""
        return BinaryMask(self.labels == label)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMask):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True)
class Component:
    """One connected set of mask pixels."""

    id: int
    pixels: np.ndarray  # (n, 2) row/col coordinates
    bbox: tuple[int, int, int, int]  # min_row, min_col, max_row, max_col

    @property
    def size(self) -> int:
        return len(self.pixels)


def check_same_shape(*items) -> None:
    """Raise PreconditionError unless every raster/mask shares one shape."""
    shapes = {tuple(item.shape) for item in items}
    if len(shapes) > 1:
        raise PreconditionError(f"dimension mismatch: {sorted(shapes)}")


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read '{path}': {e}") from e


def _open_png(path: PathLike) -> tuple[str, np.ndarray]:
    if not Path(path).is_file():
        raise InputError(f"cannot read '{path}': no such file")
    try:
        with Image.open(path) as image:
            if image.format != "PNG":
                raise RasterFormatError(f"'{path}' is {image.format}, not PNG", offset=0)
            image.load()
            return image.mode, np.array(image)
    except (UnidentifiedImageError, SyntaxError, ValueError) as e:
        raise RasterFormatError(f"'{path}' is not a readable PNG: {e}", offset=0) from e
    except OSError as e:
        raise RasterFormatError(f"'{path}' is truncated or corrupt: {e}", offset=0) from e


def _write(path: PathLike, writer) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        writer(Path(path))
    except OSError as e:
        raise InputError(f"cannot write '{path}': {e}") from e


def _load_float_raster(path: PathLike) -> IntensityRaster:
    data = _read_bytes(path)
    if len(data) < FRAS_HEADER.size:
        raise RasterFormatError("truncated float-raster header", offset=len(data))
    magic, version, width, height = FRAS_HEADER.unpack_from(data, 0)
    if magic != FRAS_MAGIC:
        raise RasterFormatError(f"bad magic {magic!r}, expected {FRAS_MAGIC!r}", offset=0)
    if version != FRAS_VERSION:
        raise RasterFormatError(f"unsupported float-raster version {version}", offset=4)
    if width == 0:
        raise RasterFormatError("width is zero", offset=5)
    if height == 0:
        raise RasterFormatError("height is zero", offset=9)

    expected = FRAS_HEADER.size + 4 * width * height
    if len(data) != expected:
        raise RasterFormatError(
            f"dimension overflow: header declares {width}x{height} "
            f"({expected} bytes) but file holds {len(data)} bytes",
            offset=min(len(data), expected),
        )

    pixels = np.frombuffer(data, dtype="<f4", count=width * height, offset=FRAS_HEADER.size)
    pixels = pixels.reshape(height, width)
    bad = ~np.isfinite(pixels) | (pixels < 0)
    if bad.any():
        index = _first_index(bad)
        kind = "non-finite" if not np.isfinite(pixels.ravel()[index]) else "negative"
        raise RasterFormatError(
            f"{kind} pixel at index {index}", offset=FRAS_HEADER.size + 4 * index
        )
    return IntensityRaster(pixels)


def _load_gray_png(path: PathLike) -> IntensityRaster:
    mode, array = _open_png(path)
    if mode == "L":
        max_code = _PNG_MAX_CODE[8]
    elif mode in ("I;16", "I;16B", "I;16L", "I"):
        max_code = _PNG_MAX_CODE[16]
    else:
        raise RasterFormatError(
            f"'{path}' has PNG mode {mode}; expected single-channel 8- or 16-bit gray",
            offset=0,
        )
    return IntensityRaster(array.astype(np.float64) / max_code)


def load_raster(path: PathLike, fmt: Union[RasterFormat, str, None] = None) -> IntensityRaster:
    """
    Load an intensity raster.

    Args:
        path: File to read
        fmt: Declared format; inferred from the suffix when omitted

    Returns:
        The raster; PNG codes are divided by the maximum code (255 or 65535)

    Raises:
        RasterFormatError: malformed header, dimension overflow, bad pixel
    """
    fmt = RasterFormat(fmt) if fmt is not None else RasterFormat.for_path(path)
    if fmt is RasterFormat.FLOAT:
        return _load_float_raster(path)
    return _load_gray_png(path)


def save_raster(
    raster: IntensityRaster,
    path: PathLike,
    fmt: Union[RasterFormat, str, None] = None,
    bit_depth: int = 8,
) -> None:
    """
    Save an intensity raster.

    Float rasters round-trip bit-exactly. PNG output clamps to [0, 1] and
    quantises with round-half-up to ``bit_depth`` (8 or 16) bits.
    """
    fmt = RasterFormat(fmt) if fmt is not None else RasterFormat.for_path(path)
    if fmt is RasterFormat.FLOAT:
        header = FRAS_HEADER.pack(FRAS_MAGIC, FRAS_VERSION, raster.width, raster.height)
        payload = header + raster.pixels.astype("<f4").tobytes()
        _write(path, lambda p: p.write_bytes(payload))
        return

    if bit_depth not in _PNG_MAX_CODE:
        raise PreconditionError(f"PNG bit depth must be 8 or 16, got {bit_depth}")
    max_code = _PNG_MAX_CODE[bit_depth]
    codes = np.floor(np.clip(raster.as_float(), 0.0, 1.0) * max_code + 0.5)
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    image = Image.fromarray(codes.astype(dtype))
    _write(path, lambda p: image.save(p, format="PNG"))


def load_label_mask(path: PathLike) -> LabelMask:
    """Load an 8-bit PNG of raw label codes 0..4."""
    mode, array = _open_png(path)
    if mode not in ("L", "P"):
        raise RasterFormatError(f"'{path}' has PNG mode {mode}; label masks are 8-bit", offset=0)
    try:
        return LabelMask(array)
    except PreconditionError as e:
        raise RasterFormatError(f"'{path}': {e}") from e


def save_label_mask(labels: LabelMask, path: PathLike) -> None:
    image = Image.fromarray(labels.labels.astype(np.uint8))
    _write(path, lambda p: image.save(p, format="PNG"))


def load_binary_mask(path: PathLike) -> BinaryMask:
    """Load an 8-bit PNG; any nonzero code is a member."""
    mode, array = _open_png(path)
    if mode not in ("1", "L", "P"):
        raise RasterFormatError(f"'{path}' has PNG mode {mode}; binary masks are 8-bit", offset=0)
    return BinaryMask(array != 0)


def save_binary_mask(mask: BinaryMask, path: PathLike) -> None:
    """Write members as 255 and the rest as 0."""
    image = Image.fromarray(mask.bits.astype(np.uint8) * 255)
    _write(path, lambda p: image.save(p, format="PNG"))


def connected_components(mask: BinaryMask, connectivity: int = 8) -> list[Component]:
    """
    Split the set pixels of ``mask`` into maximal connected components.

    Components are ordered by the (min row, min col) corner of their
    bounding box.
    """
    if connectivity not in (4, 8):
        raise PreconditionError(f"connectivity must be 4 or 8, got {connectivity}")
    structure = ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)
    labels, _ = ndimage.label(mask.bits, structure=structure)

    found = []
    for index, window in enumerate(ndimage.find_objects(labels), start=1):
        if window is None:
            continue
        rows, cols = window
        pixels = np.argwhere(labels[window] == index) + (rows.start, cols.start)
        bbox = (rows.start, cols.start, rows.stop - 1, cols.stop - 1)
        found.append((bbox, index, pixels))
    found.sort(key=lambda item: (item[0][0], item[0][1], item[1]))

    return [
        Component(id=ordinal, pixels=_frozen(pixels), bbox=bbox)
        for ordinal, (bbox, _, pixels) in enumerate(found)
    ]


def squared_distance_to(bits: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each pixel centre to the nearest set pixel."""
    if not bits.any():
        return np.full(bits.shape, np.inf)
    distance = ndimage.distance_transform_edt(~bits)
    return np.rint(distance * distance)


def dilate(mask: BinaryMask, radius: float) -> BinaryMask:
    """Dilate by a Euclidean disk: set iff some member lies within ``radius``."""
    if radius < 0:
        raise PreconditionError(f"dilation radius must be >= 0, got {radius}")
    if radius == 0 or not mask.any():
        return BinaryMask(mask.bits)
    return BinaryMask(squared_distance_to(mask.bits) <= radius * radius)


def _ring_limit(width: int) -> int:
    # d < width + 1/2 on integer squared distances; width 1 gives the 8-neighbourhood
    return width * (width + 1)


def exterior_ring(mask: BinaryMask, width: int) -> BinaryMask:
    """
    Pixels outside ``mask`` lying within ``width`` of it.

    Distances carry a half-pixel tolerance: a pixel belongs when its squared
    distance is at most width * (width + 1), i.e. d < width + 1/2, so width 5
    reaches d = sqrt(30) ~ 5.48. Width 1 is exactly the 8-connected exterior
    boundary. A full mask has no exterior; the returned empty mask then
    carries a ``note``.
    """
    if width < 1:
        raise PreconditionError(f"ring width must be >= 1, got {width}")
    if mask.is_full():
        return BinaryMask.empty(mask.shape, note="saturated: region covers the whole frame")
    if not mask.any():
        return BinaryMask.empty(mask.shape, note="empty region")
    near = squared_distance_to(mask.bits) <= _ring_limit(width)
    return BinaryMask(near & ~mask.bits)


def band(mask: BinaryMask, width: int) -> BinaryMask:
    """
    Pixels within ``width`` of the region boundary, inside and outside.

    Uses the same half-pixel tolerance as ``exterior_ring``: squared distance
    to the other side at most width * (width + 1).
    """
    if width < 1:
        raise PreconditionError(f"band width must be >= 1, got {width}")
    if not mask.any() or mask.is_full():
        return BinaryMask.empty(mask.shape, note="region has no boundary")
    limit = _ring_limit(width)
    outside = squared_distance_to(mask.bits) <= limit
    inside = squared_distance_to(~mask.bits) <= limit
    return BinaryMask(np.where(mask.bits, inside, outside))
