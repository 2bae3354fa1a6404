"""Stage-wise restoration ablation over synthetic spill scenes."""

import logging
from dataclasses import dataclass, replace

from src import seeding
from src.config import TahiConfig
from src.errors import PreconditionError
from src.metrics.quality import RestorationReport, average_reports, restoration_report
from src.raster import dilate
from src.stages.inpaint import inpaint
from src.stages.refinement import apply_refinement
from src.stages.tre import tre_apply
from src.synthetic import make_scene

logger = logging.getLogger(__name__)

VARIANTS = ("original", "pm_only", "pm_tre", "pm_tre_plain")
FULL_VARIANT = "full"


@dataclass(frozen=True)
class AblationResult:
    scenes: int
    reports: dict[str, RestorationReport]

    def to_dict(self) -> dict:
        return {
            "scenes": self.scenes,
            "variants": {name: report.to_dict() for name, report in self.reports.items()},
        }


def run_ablation(config: TahiConfig, scenes: int = 50, seed: int = 0, size: int = 96) -> AblationResult:
    """
    Average restoration reports per variant over ``scenes`` synthetic scenes.

    Variants: the untouched scene, PatchMatch only, PatchMatch + TRE as
    configured, and PatchMatch + TRE without speckle or drift. When a
    refinement stage is configured a "full" variant runs it before TRE.
    """
    if scenes < 1:
        raise PreconditionError(f"ablation needs at least one scene, got {scenes}")
    config.ensure_valid()
    params = config.tre_params()
    plain = replace(params, speckle_enabled=False, drift_enabled=False)
    names = VARIANTS + ((FULL_VARIANT,) if config.refinement_stage != "none" else ())
    collected = {name: [] for name in names}

    for index in range(scenes):
        scene_seed = seeding.derive_seed(seed, f"synthetic-{index}")
        scene = make_scene(scene_seed, shape=(size, size), looks=config.looks)
        omega = dilate(scene.oil, config.dilation_radius)
        sea_roi = scene.sea_roi.minus(omega)

        filled = inpaint(scene.post, omega, config, scene_seed)
        restored = {
            "pm_only": filled,
            "pm_tre": tre_apply(filled, omega, params, scene_seed),
            "pm_tre_plain": tre_apply(filled, omega, plain, scene_seed),
        }
        if FULL_VARIANT in collected:
            refined = apply_refinement(config.refinement_stage, filled, omega)
            restored[FULL_VARIANT] = tre_apply(refined, omega, params, scene_seed)

        for name, image in restored.items():
            original_report, restored_report = restoration_report(
                scene.post, image, omega, sea_roi, ring_width=config.ring_width
            )
            collected[name].append(restored_report)
        collected["original"].append(original_report)
        logger.debug(f"Ablation scene {index + 1}/{scenes} done")

    reports = {name: average_reports(items) for name, items in collected.items()}
    for name, report in reports.items():
        logger.info(
            f"{name}: ENL {report.enl.value}, CNR {report.cnr.value}, "
            f"residual Dice {report.residual_dice.value}"
        )
    return AblationResult(scenes=scenes, reports=reports)
