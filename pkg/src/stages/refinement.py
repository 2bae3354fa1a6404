"""Named post-inpainting refinement stages.

A refinement stage takes the inpainted raster and the inpainting mask and
returns a raster of the same shape. Stages register under a name and are
selected with ``refinement_stage`` in the configuration.
"""

import logging
from typing import Callable

from src.errors import ConfigError, InvariantViolation
from src.raster import BinaryMask, IntensityRaster

logger = logging.getLogger(__name__)

RefinementStage = Callable[[IntensityRaster, BinaryMask], IntensityRaster]

_STAGES: dict[str, RefinementStage] = {}


def register_refinement(name: str) -> Callable[[RefinementStage], RefinementStage]:
    """Decorator registering a refinement stage under ``name``."""

    def decorator(stage: RefinementStage) -> RefinementStage:
        if name in _STAGES:
            raise ConfigError(f"refinement stage '{name}' is already registered")
        _STAGES[name] = stage
        logger.debug(f"Registered refinement stage '{name}'")
        return stage

    return decorator


def available_refinements() -> list[str]:
    return sorted(_STAGES)


def get_refinement(name: str) -> RefinementStage:
    try:
        return _STAGES[name]
    except KeyError:
        raise ConfigError(
            f"unknown refinement stage '{name}' (available: {', '.join(available_refinements())})"
        ) from None


def apply_refinement(name: str, image: IntensityRaster, mask: BinaryMask) -> IntensityRaster:
    """Run the named stage and check it kept the frame size."""
    refined = get_refinement(name)(image, mask)
    if refined.shape != image.shape:
        raise InvariantViolation(
            f"refinement stage '{name}' changed the frame from {image.shape} to {refined.shape}"
        )
    return refined


@register_refinement("none")
def _identity(image: IntensityRaster, mask: BinaryMask) -> IntensityRaster:
    return image
