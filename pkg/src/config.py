"""Configuration management for the TAHI pre-event synthesis pipeline."""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional, Union

from src.errors import ConfigError
from src.stages.inpaint import PatchSpec
from src.stages.refinement import available_refinements
from src.stages.tre import TREParams

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1


@dataclass
class TahiConfig:
    """Every pipeline parameter, with the defaults used for the published corpus."""

    # Inpainting
    patch_radius: int = 3
    pm_iterations: int = 5
    pyramid_min: int = 32

    # Realism enhancement
    kappa: float = 15.0
    kappa_scale: str = "auto"
    conduction: str = "exponential"
    diffusion_iterations: int = 20
    diffusion_step: float = 0.25
    band_width: int = 5
    diffusion_side: str = "inner"
    looks: int = 4
    drift_alpha: float = 0.05
    drift_box: int = 51
    ring_width: int = 5
    speckle_enabled: bool = True
    drift_enabled: bool = True
    perturb_scope: str = "global"

    # Dataset construction
    dilation_radius: int = 3
    vessel_label: int = 3
    vessel_remove_prob: float = 0.3
    vessel_shift_min: int = 5
    vessel_shift_max: int = 30
    split_fraction: float = 0.9
    master_seed: int = 0
    refinement_stage: str = "none"
    max_mask_coverage: float = 0.95

    # Change detection
    otsu_bins: int = 256

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TahiConfig":
        """Build a config from a snake_case mapping; unknown keys are rejected."""
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        data = dict(data)
        version = data.pop("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version!r} (expected {CONFIG_VERSION})")

        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

        values = {}
        for name, value in data.items():
            values[name] = _coerce(name, known[name].type, value)
        return cls(**values)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "TahiConfig":
        """Load configuration from a JSON file."""
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config '{path}': {e}") from e
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config '{path}' is not valid JSON: {e}") from e
        config = cls.from_dict(data)
        logger.debug(f"Loaded config from {path} (hash {config.config_hash()})")
        return config

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """Short stable fingerprint of every parameter."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def patch_spec(self) -> PatchSpec:
        return PatchSpec(radius=self.patch_radius)

    def tre_params(self) -> TREParams:
        return TREParams(
            kappa=self.kappa,
            diffusion_iterations=self.diffusion_iterations,
            diffusion_step=self.diffusion_step,
            band_width=self.band_width,
            looks=self.looks,
            drift_alpha=self.drift_alpha,
            drift_box=self.drift_box,
            ring_width=self.ring_width,
            kappa_scale=self.kappa_scale,
            conduction=self.conduction,
            diffusion_side=self.diffusion_side,
            speckle_enabled=self.speckle_enabled,
            drift_enabled=self.drift_enabled,
            perturb_scope=self.perturb_scope,
        )

    def validate(self) -> tuple[bool, Optional[str]]:
        """
        Validate the configuration.

        Returns:
            Tuple of (is_valid, error_message)
        """
        if self.patch_radius < 1:
            return False, "patch_radius must be >= 1"
        if self.pm_iterations < 1:
            return False, "pm_iterations must be >= 1"
        if self.pyramid_min < 1:
            return False, "pyramid_min must be >= 1"
        is_valid, error = self.tre_params().validate()
        if not is_valid:
            return False, error
        if self.dilation_radius < 0:
            return False, "dilation_radius must be >= 0"
        if not 0 <= self.vessel_label <= 4:
            return False, "vessel_label must be a class id in 0..4"
        if not 0.0 <= self.vessel_remove_prob <= 1.0:
            return False, "vessel_remove_prob must lie in [0, 1]"
        if self.vessel_shift_min < 0 or self.vessel_shift_min > self.vessel_shift_max:
            return False, "vessel shifts must satisfy 0 <= vessel_shift_min <= vessel_shift_max"
        if not 0.0 < self.split_fraction < 1.0:
            return False, "split_fraction must lie in (0, 1)"
        if not 0 <= self.master_seed < 2**64:
            return False, "master_seed must be an unsigned 64-bit integer"
        if not 0.0 < self.max_mask_coverage <= 1.0:
            return False, "max_mask_coverage must lie in (0, 1]"
        if self.otsu_bins < 2:
            return False, "otsu_bins must be >= 2"
        if self.refinement_stage not in available_refinements():
            return False, f"refinement_stage must be one of {available_refinements()}"
        return True, None

    def ensure_valid(self) -> "TahiConfig":
        is_valid, error = self.validate()
        if not is_valid:
            raise ConfigError(error)
        return self


def _coerce(name: str, kind: type, value: Any) -> Any:
    """Check a JSON value against the field type; ints are accepted for floats."""
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(f"config key '{name}' must be {kind.__name__}, got {value!r}")
    return float(value) if kind is float else value
