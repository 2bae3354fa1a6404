"""Tests for raster containers, file formats and morphology."""

import struct

import numpy as np
import pytest
from PIL import Image

from src.errors import InputError, PreconditionError, RasterFormatError
from src.raster import (
    BinaryMask,
    IntensityRaster,
    LabelMask,
    RasterFormat,
    band,
    connected_components,
    dilate,
    exterior_ring,
    load_binary_mask,
    load_label_mask,
    load_raster,
    save_binary_mask,
    save_label_mask,
    save_raster,
)


def brute_squared_distance(bits: np.ndarray) -> np.ndarray:
    """Per-pixel minimum squared distance to the set pixels, by exhaustive search."""
    points = np.argwhere(bits)
    rows, cols = np.indices(bits.shape)
    result = np.full(bits.shape, np.inf)
    for r, c in points:
        result = np.minimum(result, (rows - r) ** 2 + (cols - c) ** 2)
    return result


def flood_fill_components(bits: np.ndarray, connectivity: int) -> list[set]:
    """Independent flood fill used as the component oracle."""
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    seen = np.zeros(bits.shape, dtype=bool)
    found = []
    for start in zip(*np.nonzero(bits)):
        if seen[start]:
            continue
        stack, members = [start], set()
        seen[start] = True
        while stack:
            r, c = stack.pop()
            members.add((int(r), int(c)))
            for dy, dx in steps:
                nr, nc = r + dy, c + dx
                if 0 <= nr < bits.shape[0] and 0 <= nc < bits.shape[1] and bits[nr, nc] and not seen[nr, nc]:
                    seen[nr, nc] = True
                    stack.append((nr, nc))
        found.append(members)
    return found


def fras_bytes(width: int, height: int, values) -> bytes:
    return struct.pack("<4sBII", b"FRAS", 1, width, height) + np.asarray(values, dtype="<f4").tobytes()


class TestContainers:
    """Test cases for the immutable raster and mask types."""

    def test_raster_rejects_negative(self):
        """Test negative intensities violate the raster invariant."""
        with pytest.raises(PreconditionError):
            IntensityRaster(np.array([[1.0, -0.5]]))

    def test_raster_rejects_nan(self):
        """Test non-finite intensities violate the raster invariant."""
        with pytest.raises(PreconditionError):
            IntensityRaster(np.array([[np.nan]]))

    def test_raster_rejects_empty(self):
        """Test an empty grid is not a raster."""
        with pytest.raises(PreconditionError):
            IntensityRaster(np.zeros((0, 3)))

    def test_raster_is_read_only(self):
        """Test the stored pixels cannot be modified in place."""
        raster = IntensityRaster(np.ones((2, 2)))
        with pytest.raises(ValueError):
            raster.pixels[0, 0] = 5.0

    def test_label_range(self):
        """Test labels outside 0..4 are rejected."""
        with pytest.raises(PreconditionError):
            LabelMask(np.array([[0, 5]]))

    def test_mask_algebra(self):
        """Test union, intersection, difference and complement."""
        a = BinaryMask(np.array([[True, True, False]]))
        b = BinaryMask(np.array([[False, True, True]]))
        assert (a | b).count == 3
        assert (a & b).count == 1
        assert a.minus(b) == BinaryMask(np.array([[True, False, False]]))
        assert (~a).count == 1

    def test_empty_and_full(self):
        """Test the empty and full masks are representable."""
        assert not BinaryMask.empty((3, 4)).any()
        assert BinaryMask.full((3, 4)).is_full()

    def test_format_from_suffix(self):
        """Test format inference from the file suffix."""
        assert RasterFormat.for_path("a.fras") is RasterFormat.FLOAT
        assert RasterFormat.for_path("a.PNG") is RasterFormat.PNG
        with pytest.raises(InputError):
            RasterFormat.for_path("a.tif")


class TestFloatRaster:
    """Test cases for the float-raster container."""

    def test_load_verbatim(self, tmp_path):
        """Test a 3x2 float-raster loads to the identical raster."""
        values = [0.0, 1.5, 2.25, 3.0, 1e-7, 100.0]
        path = tmp_path / "a.fras"
        path.write_bytes(fras_bytes(3, 2, values))
        raster = load_raster(path)
        assert raster.shape == (2, 3)
        assert raster.pixels.ravel().tolist() == np.asarray(values, dtype=np.float32).tolist()

    def test_round_trip_bit_exact(self, tmp_path):
        """Test save then load is bit-identical."""
        rng = np.random.default_rng(3)
        raster = IntensityRaster(rng.gamma(2.0, 1.0, size=(17, 23)))
        path = tmp_path / "r.fras"
        save_raster(raster, path)
        assert load_raster(path) == raster
        assert path.read_bytes()[:4] == b"FRAS"

    def test_nan_pixel_offset(self, tmp_path):
        """Test a NaN is reported at the byte offset of the offending pixel."""
        path = tmp_path / "nan.fras"
        path.write_bytes(fras_bytes(3, 1, [1.0, np.nan, 2.0]))
        with pytest.raises(RasterFormatError) as info:
            load_raster(path)
        assert info.value.offset == 13 + 4

    def test_negative_pixel(self, tmp_path):
        """Test a negative pixel is a format error."""
        path = tmp_path / "neg.fras"
        path.write_bytes(fras_bytes(2, 1, [-1.0, 2.0]))
        with pytest.raises(RasterFormatError, match="negative") as info:
            load_raster(path)
        assert info.value.offset == 13

    def test_bad_magic(self, tmp_path):
        """Test a wrong magic is reported at offset 0."""
        path = tmp_path / "bad.fras"
        path.write_bytes(b"XRAS" + fras_bytes(1, 1, [1.0])[4:])
        with pytest.raises(RasterFormatError) as info:
            load_raster(path)
        assert info.value.offset == 0

    def test_truncated_header(self, tmp_path):
        """Test a short file is a malformed header."""
        path = tmp_path / "short.fras"
        path.write_bytes(b"FRAS\x01")
        with pytest.raises(RasterFormatError):
            load_raster(path)

    def test_dimension_overflow(self, tmp_path):
        """Test a header declaring more pixels than present is rejected."""
        path = tmp_path / "overflow.fras"
        path.write_bytes(fras_bytes(4, 4, [1.0, 2.0]))
        with pytest.raises(RasterFormatError, match="dimension overflow"):
            load_raster(path)

    def test_missing_file(self, tmp_path):
        """Test a missing file is an input error."""
        with pytest.raises(InputError):
            load_raster(tmp_path / "absent.fras")


class TestPng:
    """Test cases for gray PNG interchange."""

    def test_endpoint_codes(self, tmp_path):
        """Test 8-bit codes 0 and 255 map to 0.0 and 1.0."""
        path = tmp_path / "g.png"
        Image.fromarray(np.array([[0, 255]], dtype=np.uint8)).save(path)
        assert load_raster(path).pixels.tolist() == [[0.0, 1.0]]

    def test_quantisation(self, tmp_path):
        """Test 0.5 quantises to code 128 and 1.7 clamps to 255."""
        path = tmp_path / "q.png"
        save_raster(IntensityRaster(np.array([[0.5, 1.7, 0.0]])), path)
        with Image.open(path) as image:
            assert np.array(image).tolist() == [[128, 255, 0]]

    def test_sixteen_bit(self, tmp_path):
        """Test 16-bit output divides back by 65535."""
        path = tmp_path / "w.png"
        save_raster(IntensityRaster(np.array([[0.0, 1.0, 0.25]])), path, bit_depth=16)
        loaded = load_raster(path)
        assert loaded.pixels[0, 0] == 0.0
        assert loaded.pixels[0, 1] == 1.0
        assert loaded.pixels[0, 2] == pytest.approx(0.25, abs=1e-5)

    def test_color_png_rejected(self, tmp_path):
        """Test an RGB PNG is not a gray raster."""
        path = tmp_path / "rgb.png"
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(path)
        with pytest.raises(RasterFormatError):
            load_raster(path)

    def test_not_a_png(self, tmp_path):
        """Test garbage bytes are a format error."""
        path = tmp_path / "junk.png"
        path.write_bytes(b"not an image")
        with pytest.raises(RasterFormatError):
            load_raster(path)

    def test_label_mask_round_trip(self, tmp_path):
        """Test raw label codes survive save and load."""
        labels = LabelMask(np.array([[0, 1, 2], [3, 4, 0]]))
        path = tmp_path / "labels.png"
        save_label_mask(labels, path)
        assert load_label_mask(path) == labels

    def test_binary_mask_codes(self, tmp_path):
        """Test binary masks are written as 0/255 and read back as nonzero."""
        mask = BinaryMask(np.array([[True, False]]))
        path = tmp_path / "m.png"
        save_binary_mask(mask, path)
        with Image.open(path) as image:
            assert np.array(image).tolist() == [[255, 0]]
        assert load_binary_mask(path) == mask


class TestComponents:
    """Test cases for connected component labelling."""

    def test_empty(self):
        """Test an empty mask has no components."""
        assert connected_components(BinaryMask.empty((4, 4))) == []

    def test_diagonal_connectivity(self):
        """Test diagonal neighbours join under 8- but not 4-connectivity."""
        bits = np.zeros((3, 3), dtype=bool)
        bits[0, 0] = bits[1, 1] = True
        assert len(connected_components(BinaryMask(bits), connectivity=8)) == 1
        assert len(connected_components(BinaryMask(bits), connectivity=4)) == 2

    def test_bad_connectivity(self):
        """Test only 4 and 8 are accepted."""
        with pytest.raises(PreconditionError):
            connected_components(BinaryMask.empty((2, 2)), connectivity=6)

    @pytest.mark.parametrize("connectivity", [4, 8])
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_flood_fill(self, seed, connectivity):
        """Test components equal an independent flood fill on random masks."""
        bits = np.random.default_rng(seed).random((16, 16)) < 0.4
        components = connected_components(BinaryMask(bits), connectivity=connectivity)
        found = [{tuple(p) for p in c.pixels.tolist()} for c in components]
        expected = flood_fill_components(bits, connectivity)
        assert sorted(map(sorted, found)) == sorted(map(sorted, expected))

    def test_ordering_and_bbox(self):
        """Test components are ordered by their bounding-box corner."""
        bits = np.zeros((6, 6), dtype=bool)
        bits[4, 0] = True
        bits[0, 3:5] = True
        bits[2, 1] = True
        components = connected_components(BinaryMask(bits))
        assert [c.bbox for c in components] == [(0, 3, 0, 4), (2, 1, 2, 1), (4, 0, 4, 0)]
        assert [c.id for c in components] == [0, 1, 2]
        assert components[0].size == 2


class TestMorphology:
    """Test cases for dilation, exterior ring and band."""

    @pytest.fixture
    def dot(self):
        """A single set pixel in the centre of a 5x5 grid."""
        bits = np.zeros((5, 5), dtype=bool)
        bits[2, 2] = True
        return BinaryMask(bits)

    def test_dilate_identity(self, dot):
        """Test radius 0 leaves the mask unchanged."""
        assert dilate(dot, 0) == dot

    def test_dilate_plus_shape(self, dot):
        """Test radius 1 gives the 5-pixel plus shape."""
        dilated = dilate(dot, 1)
        assert dilated.count == 5
        assert dilated.bits[1, 2] and dilated.bits[3, 2] and dilated.bits[2, 1] and dilated.bits[2, 3]
        assert not dilated.bits[1, 1]

    def test_dilate_negative_radius(self, dot):
        """Test a negative radius is rejected."""
        with pytest.raises(PreconditionError):
            dilate(dot, -1)

    @pytest.mark.parametrize("seed", range(4))
    def test_dilate_matches_oracle(self, seed):
        """Test dilation equals the brute-force disk rule and contains its input."""
        bits = np.random.default_rng(seed).random((20, 24)) < 0.05
        for radius in (1, 2, 3.5):
            dilated = dilate(BinaryMask(bits), radius)
            assert np.array_equal(dilated.bits, brute_squared_distance(bits) <= radius * radius)
            assert not (bits & ~dilated.bits).any()

    def test_ring_width_one(self, dot):
        """Test width 1 is exactly the 8 neighbours."""
        ring = exterior_ring(dot, 1)
        assert ring.count == 8
        assert not ring.bits[2, 2]
        assert ring.bits[1:4, 1:4].sum() == 8

    def test_ring_monotone(self):
        """Test a wider ring contains the narrower one."""
        bits = np.random.default_rng(7).random((32, 32)) < 0.03
        mask = BinaryMask(bits)
        for width in range(1, 5):
            narrow, wide = exterior_ring(mask, width), exterior_ring(mask, width + 1)
            assert not (narrow.bits & ~wide.bits).any()

    @pytest.mark.parametrize("seed", range(4))
    def test_ring_matches_oracle(self, seed):
        """Test the width-3 ring equals the brute-force distance rule."""
        bits = np.random.default_rng(seed).random((32, 32)) < 0.04
        expected = (brute_squared_distance(bits) <= 3 * 4) & ~bits
        assert np.array_equal(exterior_ring(BinaryMask(bits), 3).bits, expected)

    def test_ring_half_pixel_reach(self):
        """Test width 5 reaches offset (5, 2) at squared distance 29 but not (5, 3) or (0, 6)."""
        bits = np.zeros((21, 21), dtype=bool)
        bits[10, 10] = True
        ring = exterior_ring(BinaryMask(bits), 5)
        assert ring.bits[15, 12]
        assert ring.bits[10, 15]
        assert not ring.bits[15, 13]
        assert not ring.bits[10, 16]

    def test_ring_full_mask(self):
        """Test a full mask yields an empty ring with a note."""
        ring = exterior_ring(BinaryMask.full((4, 4)), 2)
        assert not ring.any()
        assert "saturated" in ring.note

    @pytest.mark.parametrize("seed", range(4))
    def test_band_matches_oracle(self, seed):
        """Test the two-sided band equals the brute-force distance rule."""
        bits = np.random.default_rng(seed).random((24, 24)) < 0.3
        width = 2
        limit = width * (width + 1)
        outside = brute_squared_distance(bits) <= limit
        inside = brute_squared_distance(~bits) <= limit
        expected = np.where(bits, inside, outside)
        assert np.array_equal(band(BinaryMask(bits), width).bits, expected)

    def test_band_saturates(self):
        """Test a band as wide as the diagonal covers the frame."""
        bits = np.zeros((10, 12), dtype=bool)
        bits[3:6, 4:8] = True
        assert band(BinaryMask(bits), 16).is_full()

    def test_band_excludes_deep_interior(self):
        """Test interior pixels farther than the width from the boundary are excluded."""
        bits = np.zeros((21, 21), dtype=bool)
        bits[2:19, 2:19] = True
        assert not band(BinaryMask(bits), 3).bits[10, 10]
        assert band(BinaryMask(bits), 3).bits[2, 10]
