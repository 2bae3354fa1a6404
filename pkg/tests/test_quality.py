"""Tests for restoration quality metrics."""

import math

import numpy as np
import pytest

from src.errors import PreconditionError
from src.metrics.quality import (
    MetricValue,
    RestorationReport,
    average_reports,
    cnr,
    dice,
    enl,
    profile_ratios,
    residual_detector,
    residual_dice,
    restoration_report,
    sidelobe_ratios,
)
from src.raster import BinaryMask, IntensityRaster
from src.stages.tre import sample_speckle
from src.synthetic import make_scene


def row(values) -> tuple[IntensityRaster, BinaryMask]:
    values = np.asarray(values, dtype=float)[None, :]
    return IntensityRaster(values), BinaryMask.full(values.shape)


def disc(shape, center, radius) -> BinaryMask:
    yy, xx = np.indices(shape)
    return BinaryMask((yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2)


class TestEnl:
    """Test cases for the equivalent number of looks."""

    def test_hand_example(self):
        """Test {1,1,1,3,3,3} gives 4 / 1.2."""
        assert enl(*row([1, 1, 1, 3, 3, 3])).value == pytest.approx(10 / 3)

    def test_pure_speckle(self):
        """Test four-look speckle on a constant gives ENL near four."""
        image = IntensityRaster(0.5 * sample_speckle(512, 512, 4, 1).as_float())
        value = enl(image, BinaryMask.full((512, 512))).value
        assert 3.6 <= value <= 4.4

    def test_constant_undefined(self):
        """Test a constant ROI is flagged homogeneous."""
        result = enl(*row([2.0] * 10))
        assert result.defined is False
        assert result.value is None
        assert result.reason == "homogeneous"

    def test_too_few_pixels(self):
        """Test a single-pixel ROI is a precondition failure."""
        with pytest.raises(PreconditionError):
            enl(*row([1.0]))


class TestCnr:
    """Test cases for the contrast-to-noise ratio."""

    def test_two_valued(self):
        """Test a 100/100 split of 0 and 1 uses the unbiased deviation."""
        result = cnr(*row([0.0] * 100 + [1.0] * 100))
        assert result.value == pytest.approx(1.0 / math.sqrt(50 / 199), abs=1e-5)
        assert result.value == pytest.approx(1.99499, abs=1e-5)

    def test_tail_formula(self):
        """Test the tails hold ceil(n/20) values."""
        values = np.arange(41, dtype=float)
        result = cnr(*row(values))
        expected = (values[-3:].mean() - values[:3].mean()) / values.std(ddof=1)
        assert result.value == pytest.approx(expected)

    def test_affine_invariance(self):
        """Test a positive affine map leaves CNR unchanged."""
        values = np.random.default_rng(0).gamma(4.0, 0.25, size=200)
        assert cnr(*row(3.0 * values + 7.0)).value == pytest.approx(cnr(*row(values)).value, rel=1e-5)

    def test_constant_undefined(self):
        """Test zero deviation is flagged."""
        assert cnr(*row([5.0] * 50)).defined is False

    def test_too_few_pixels(self):
        """Test ROIs under forty pixels are rejected."""
        with pytest.raises(PreconditionError):
            cnr(*row(np.arange(10.0)))


class TestSidelobes:
    """Test cases for ISLR and PSLR."""

    def test_single_sidelobe_each_side(self):
        """Test side lobes of 0.1 around a unit peak give -20 dB PSLR."""
        islr, pslr = profile_ratios(np.array([0.1, 0.0, 1.0, 0.0, 0.1]), 2)
        assert pslr == pytest.approx(-20.0)
        assert islr == pytest.approx(10 * math.log10(0.02))

    def test_monotone_profile_undefined(self):
        """Test a unimodal profile without interior minima has no ratios."""
        assert profile_ratios(np.array([0.1, 0.5, 1.0, 0.5, 0.1]), 2) is None

    def test_one_sided_null(self):
        """Test a null on one side is enough."""
        result = profile_ratios(np.array([0.2, 0.5, 1.0, 0.0, 0.3]), 2)
        assert result is not None
        assert result[1] == pytest.approx(10 * math.log10(0.09))

    def test_symmetric_image(self):
        """Test an image equal to its transpose averages two identical profiles."""
        profile = np.array([0.05, 0.1, 0.0, 1.0, 0.0, 0.1, 0.05])
        ratios = sidelobe_ratios(IntensityRaster(np.outer(profile, profile)))
        assert ratios.pslr_db.value == pytest.approx(-20.0, abs=1e-4)
        assert ratios.islr_db.value == pytest.approx(10 * math.log10(0.025), abs=1e-4)

    def test_no_sidelobes_undefined(self):
        """Test a lone peak on zero background is undefined."""
        values = np.zeros((9, 9))
        values[4, 4] = 1.0
        ratios = sidelobe_ratios(IntensityRaster(values))
        assert ratios.islr_db.defined is False
        assert ratios.pslr_db.defined is False

    @pytest.mark.parametrize("seed", range(20))
    def test_pslr_never_positive(self, seed):
        """Test the peak side lobe never exceeds the main peak."""
        scene = make_scene(seed, reflector=True)
        ratios = sidelobe_ratios(scene.post)
        assert ratios.pslr_db.defined
        assert ratios.pslr_db.value <= 0.0
        speckle = sidelobe_ratios(sample_speckle(40, 40, 1, seed))
        assert not speckle.pslr_db.defined or speckle.pslr_db.value <= 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_weaker_reflector_keeps_anchor(self, seed):
        """Test a second, weaker reflector off the anchor's row and column changes nothing."""
        scene = make_scene(seed, reflector=True)
        values = scene.post.as_float()
        height, width = values.shape
        row, col = np.unravel_index(int(np.argmax(values)), values.shape)
        values[(row + 17) % height, (col + 23) % width] = 0.5 * values[row, col]
        with_second = IntensityRaster(values)
        assert np.unravel_index(int(np.argmax(with_second.pixels)), values.shape) == (row, col)
        assert sidelobe_ratios(with_second) == sidelobe_ratios(scene.post)


class TestDice:
    """Test cases for the Dice coefficient."""

    def test_identical(self):
        """Test identical non-empty masks score 1."""
        mask = BinaryMask(np.eye(4, dtype=bool))
        assert dice(mask, mask) == 1.0

    def test_disjoint(self):
        """Test disjoint masks score 0."""
        a = np.zeros((4, 4), dtype=bool)
        a[0] = True
        assert dice(BinaryMask(a), BinaryMask(~a)) == 0.0

    def test_half_overlap(self):
        """Test two masks of four sharing two pixels score 0.5."""
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, :4] = True
        b[0, 2:] = True
        b[1, :2] = True
        assert dice(BinaryMask(a), BinaryMask(b)) == 0.5

    def test_both_empty(self):
        """Test two empty masks agree perfectly."""
        assert dice(BinaryMask.empty((3, 3)), BinaryMask.empty((3, 3))) == 1.0

    @pytest.mark.parametrize("seed", range(50))
    def test_symmetric_and_bounded(self, seed):
        """Test Dice is symmetric, lies in [0, 1] and reaches 1 only for equal masks."""
        rng = np.random.default_rng(seed)
        shape = (int(rng.integers(1, 20)), int(rng.integers(1, 20)))
        a = BinaryMask(rng.random(shape) < rng.random())
        b = BinaryMask(rng.random(shape) < rng.random()) if seed % 5 else a
        value = dice(a, b)
        assert value == dice(b, a)
        assert 0.0 <= value <= 1.0
        assert (value == 1.0) == (a == b)


class TestResidualDetector:
    """Test cases for the threshold residual detector."""

    @pytest.fixture
    def sea(self):
        values = np.random.default_rng(4).gamma(4.0, 0.25, size=(96, 96)) * 0.5
        return values, disc((96, 96), (48, 48), 15)

    def test_dark_region_fully_flagged(self, sea):
        """Test a zeroed region on bright sea is entirely flagged."""
        values, omega = sea
        values = values.copy()
        values[omega.bits] = 0.0
        image = IntensityRaster(values)
        flagged = residual_detector(image, omega, 5)
        assert np.all(flagged.bits[omega.bits])
        assert residual_dice(image, omega, 5) == 1.0

    def test_matched_region_rarely_flagged(self, sea):
        """Test a region drawn from the ring's distribution scores a small Dice."""
        values, omega = sea
        assert residual_dice(IntensityRaster(values), omega, 5) <= 0.25

    def test_monotone_in_darkening(self, sea):
        """Test darkening region pixels never shrinks the flagged set."""
        values, omega = sea
        before = residual_detector(IntensityRaster(values), omega, 5)
        darker = values.copy()
        darker[omega.bits] *= 0.5
        after = residual_detector(IntensityRaster(darker), omega, 5)
        assert np.all(after.bits[before.bits])

    def test_empty_ring(self):
        """Test a region covering the frame yields an empty, annotated mask."""
        flagged = residual_detector(IntensityRaster(np.ones((6, 6))), BinaryMask.full((6, 6)), 3)
        assert not flagged.any()
        assert flagged.note is not None

    def test_empty_region_rejected(self):
        """Test the detector needs a region."""
        with pytest.raises(PreconditionError):
            residual_detector(IntensityRaster(np.ones((6, 6))), BinaryMask.empty((6, 6)), 3)


class TestRestorationReport:
    """Test cases for paired restoration reports."""

    @pytest.fixture
    def scene(self):
        rng = np.random.default_rng(9)
        values = rng.gamma(4.0, 0.25, size=(80, 80)) * 0.4
        omega = disc((80, 80), (40, 40), 12)
        values[omega.bits] *= 0.2
        sea_roi = BinaryMask(~omega.bits).minus(disc((80, 80), (40, 40), 20))
        return IntensityRaster(values), omega, sea_roi

    def test_identical_images(self, scene):
        """Test identical inputs give identical reports."""
        image, omega, sea_roi = scene
        before, after = restoration_report(image, image, omega, sea_roi)
        assert before == after

    def test_dark_patch_restored(self, scene):
        """Test filling the dark patch with sea raises ENL and lowers CNR and Dice."""
        image, omega, sea_roi = scene
        values = image.as_float()
        values[omega.bits] = np.random.default_rng(10).gamma(4.0, 0.25, size=omega.count) * 0.4
        before, after = restoration_report(image, IntensityRaster(values), omega, sea_roi)
        assert after.enl.value >= before.enl.value
        assert after.cnr.value <= before.cnr.value
        assert after.residual_dice.value < before.residual_dice.value

    def test_overlapping_roi_rejected(self, scene):
        """Test the sea ROI may not overlap the region."""
        image, omega, _ = scene
        with pytest.raises(PreconditionError):
            restoration_report(image, image, omega, BinaryMask.full(image.shape))

    def test_to_dict(self, scene):
        """Test serialisation names every metric and the detector."""
        image, omega, sea_roi = scene
        data = restoration_report(image, image, omega, sea_roi)[0].to_dict()
        assert set(data) == {"enl", "cnr", "islr_db", "pslr_db", "residual_dice", "roi", "residual_detector"}
        assert data["enl"]["defined"] is True
        assert data["residual_detector"] == "threshold detector"


class TestAverageReports:
    """Test cases for averaging reports over scenes."""

    @staticmethod
    def report(enl_value, dice_value):
        undefined = MetricValue.undefined("n/a")
        return RestorationReport(
            enl=MetricValue.of(enl_value) if enl_value is not None else undefined,
            cnr=undefined,
            islr_db=MetricValue.of(-10.0),
            pslr_db=MetricValue.of(-20.0),
            residual_dice=MetricValue.of(dice_value),
            roi_descriptor="test",
        )

    def test_defined_values_only(self):
        """Test undefined entries are left out of the mean."""
        mean = average_reports([self.report(2.0, 0.1), self.report(None, 0.3), self.report(4.0, 0.2)])
        assert mean.enl.value == pytest.approx(3.0)
        assert mean.residual_dice.value == pytest.approx(0.2)
        assert mean.cnr.defined is False
        assert mean.cnr.to_dict() == {"value": None, "defined": False}

    def test_nothing_to_average(self):
        """Test an empty list is rejected."""
        with pytest.raises(PreconditionError):
            average_reports([])
