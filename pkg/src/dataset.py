"""Bi-temporal dataset construction: pair synthesis, splits, layout and statistics."""

import asyncio
import json
import logging
import math
import shutil
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from src import seeding
from src.config import TahiConfig
from src.errors import DatasetError, InputError, InvariantViolation, SceneRejectedError
from src.raster import (
    OIL_LABEL,
    BinaryMask,
    IntensityRaster,
    LabelMask,
    check_same_shape,
    dilate,
    load_label_mask,
    load_raster,
    save_binary_mask,
    save_label_mask,
    save_raster,
)
from src.stages.inpaint import inpaint
from src.stages.refinement import apply_refinement
from src.stages.tre import tre_apply
from src.stages.vessels import perturb_vessels

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "test")
SCENE_FILES = {
    "pre": "pre.fras",
    "post": "post.fras",
    "change_gt": "change_gt.png",
    "labels": "labels.png",
    "provenance": "provenance.json",
}
_STAGING = ".staging"


@dataclass
class Provenance:
    """Everything needed to regenerate a pre-event raster bit-exactly."""

    scene_id: str
    config_hash: str
    master_seed: int
    scene_seed: int
    inpaint_pixels: int
    vessel_events: list[dict] = field(default_factory=list)
    refinement_stage: str = "none"
    stage_timings: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict[str, Any]:
        data = {
            "scene_id": self.scene_id,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "scene_seed": self.scene_seed,
            "inpaint_pixels": self.inpaint_pixels,
            "refinement_stage": self.refinement_stage,
            "vessel_events": self.vessel_events,
            "vessel_seams": "destination seams of moved vessels are left unblended",
        }
        if include_timings:
            data["stage_timings"] = self.stage_timings
        return data


@dataclass(frozen=True)
class ScenePair:
    """Synthetic pre-event raster with its verbatim post-event partner."""

    scene_id: str
    pre: IntensityRaster
    post: IntensityRaster
    change_gt: BinaryMask
    labels: LabelMask
    inpaint_mask: BinaryMask
    perturbation_sites: BinaryMask
    provenance: Provenance


def inpaint_domain(oil: BinaryMask, extra: BinaryMask, config: TahiConfig) -> BinaryMask:
    """dilate(oil, dilation_radius) ∪ vacated vessel footprints."""
    return dilate(oil, config.dilation_radius) | extra


def build_pair(
    post: IntensityRaster,
    labels: LabelMask,
    config: TahiConfig,
    scene_seed: int,
    scene_id: str = "scene",
) -> ScenePair:
    """
    Synthesize the pre-event partner of one annotated post-event scene.

    Vessels are perturbed, the dilated oil mask plus vacated footprints are
    inpainted, the refinement stage and realism enhancement follow. The
    change ground truth is the undilated oil mask; ``post`` is kept verbatim.
    """
    check_same_shape(post, labels)
    oil = labels.mask_of(OIL_LABEL)
    if not oil.any():
        raise SceneRejectedError(f"scene '{scene_id}' has no oil pixels (label {OIL_LABEL})")

    timings = {}
    started = time.perf_counter()
    perturbed = perturb_vessels(post, labels, config, scene_seed)
    timings["vessels"] = time.perf_counter() - started

    omega = inpaint_domain(oil, perturbed.extra_mask, config)
    coverage = omega.count / omega.size
    if coverage >= config.max_mask_coverage:
        raise SceneRejectedError(
            f"scene '{scene_id}' inpaint mask covers {coverage:.1%} of the frame "
            f"(limit {config.max_mask_coverage:.0%})"
        )

    started = time.perf_counter()
    filled = inpaint(perturbed.image, omega, config, scene_seed)
    timings["inpaint"] = time.perf_counter() - started

    started = time.perf_counter()
    refined = apply_refinement(config.refinement_stage, filled, omega)
    timings["refinement"] = time.perf_counter() - started

    started = time.perf_counter()
    pre = tre_apply(refined, omega, config.tre_params(), scene_seed)
    timings["tre"] = time.perf_counter() - started

    logger.info(
        f"Scene '{scene_id}': inpainted {omega.count} px ({coverage:.1%}), "
        f"{len(perturbed.events)} vessel event(s), {sum(timings.values()):.2f}s"
    )
    return ScenePair(
        scene_id=scene_id,
        pre=pre,
        post=post,
        change_gt=oil,
        labels=labels,
        inpaint_mask=omega,
        perturbation_sites=perturbed.sites,
        provenance=Provenance(
            scene_id=scene_id,
            config_hash=config.config_hash(),
            master_seed=config.master_seed,
            scene_seed=scene_seed,
            inpaint_pixels=omega.count,
            vessel_events=perturbed.events,
            refinement_stage=config.refinement_stage,
            stage_timings=timings,
        ),
    )


def ensure_dir(path: PathLike) -> Path:
    """Create ``path`` and its parents; unwritable locations are input errors."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create directory '{path}': {e}") from e
    return path


def write_json(data: Any, path: PathLike) -> None:
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot write '{path}': {e}") from e


def save_pair(pair: ScenePair, directory: PathLike) -> dict[str, Path]:
    """Write the five scene files into ``directory``."""
    directory = ensure_dir(directory)
    paths = {name: directory / filename for name, filename in SCENE_FILES.items()}
    save_raster(pair.pre, paths["pre"])
    save_raster(pair.post, paths["post"])
    save_binary_mask(pair.change_gt, paths["change_gt"])
    save_label_mask(pair.labels, paths["labels"])
    write_json(pair.provenance.to_dict(), paths["provenance"])
    return paths


@dataclass(frozen=True)
class InputScene:
    scene_id: str
    post_path: Path
    labels_path: Path


def load_input_list(path: PathLike) -> list[InputScene]:
    """
    Read a JSON list of {"post", "labels"[, "id"]} entries.

    Relative paths resolve against the list file's directory; the id
    defaults to the post file's stem.
    """
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise InputError(f"cannot read input list '{path}': {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"input list '{path}' is not valid JSON: {e}") from e
    if not isinstance(entries, list) or not entries:
        raise DatasetError(f"input list '{path}' must be a non-empty JSON array")

    scenes = []
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict) or "post" not in entry or "labels" not in entry:
            raise DatasetError(f"input entry {index} needs 'post' and 'labels' paths")
        post_path = path.parent / entry["post"]
        scenes.append(InputScene(
            scene_id=str(entry.get("id", Path(entry["post"]).stem)),
            post_path=post_path,
            labels_path=path.parent / entry["labels"],
        ))
    check_scene_ids([s.scene_id for s in scenes])
    return scenes


def check_scene_id(scene_id: str) -> None:
    """Reject ids that are not a single plain path component."""
    if not scene_id or scene_id.startswith(".") or "/" in scene_id or "\\" in scene_id or ".." in scene_id:
        raise DatasetError(f"scene id '{scene_id}' is not a plain directory name")


def check_scene_ids(scene_ids: list[str]) -> None:
    seen = set()
    for scene_id in scene_ids:
        check_scene_id(scene_id)
        if scene_id in seen:
            raise DatasetError(f"duplicate scene id '{scene_id}'")
        seen.add(scene_id)


def split_scenes(scene_ids: list[str], fraction: float, master_seed: int) -> dict[str, str]:
    """
    Assign every scene to train or test.

    Sorted ids are shuffled by a permutation seeded from ``master_seed`` and
    the first round(fraction * n) go to train, leaving at least one test scene.
    """
    ordered = sorted(scene_ids)
    n = len(ordered)
    n_train = min(int(math.floor(fraction * n + 0.5)), n - 1)
    if n >= 2:
        n_train = max(n_train, 1)
    order = seeding.stream(master_seed, seeding.SPLIT).permutation(n)
    assignment = {}
    for position, index in enumerate(order):
        assignment[ordered[index]] = "train" if position < n_train else "test"

    train = {s for s, split in assignment.items() if split == "train"}
    test = {s for s, split in assignment.items() if split == "test"}
    if train & test:
        raise InvariantViolation(f"scenes in both splits: {sorted(train & test)}")
    logger.info(f"Split {n} scene(s): {len(train)} train / {len(test)} test")
    return assignment


@dataclass
class SceneEntry:
    scene_id: str
    split: str
    seed: int
    paths: dict[str, str]

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.scene_id, "split": self.split, "seed": self.seed, "paths": self.paths}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SceneEntry":
        try:
            return cls(str(data["id"]), str(data["split"]), int(data["seed"]), dict(data["paths"]))
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"malformed scene entry {data!r}: {e}") from e


@dataclass
class DatasetManifest:
    """Index of a built dataset, stored as ``manifest.json`` at its root."""

    root: Path
    config: dict[str, Any]
    scenes: list[SceneEntry]
    stats: dict[str, dict[str, Any]] = field(default_factory=dict)
    rejected: list[dict[str, str]] = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "config": self.config,
            "scenes": [s.to_dict() for s in self.scenes],
            "stats": self.stats,
            "rejected": self.rejected,
        }

    def save(self) -> Path:
        path = self.root / MANIFEST_NAME
        write_json(self.to_dict(), path)
        return path

    @classmethod
    def load(cls, root: PathLike) -> "DatasetManifest":
        root = Path(root)
        path = root / MANIFEST_NAME
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise DatasetError(f"cannot read manifest '{path}': {e}") from e
        except json.JSONDecodeError as e:
            raise DatasetError(f"manifest '{path}' is not valid JSON: {e}") from e
        if data.get("version") != MANIFEST_VERSION:
            raise DatasetError(f"unsupported manifest version {data.get('version')!r}")
        manifest = cls(
            root=root,
            config=data.get("config", {}),
            scenes=[SceneEntry.from_dict(s) for s in data.get("scenes", [])],
            stats=data.get("stats", {}),
            rejected=data.get("rejected", []),
        )
        manifest.validate()
        return manifest

    def validate(self) -> None:
        """Raise DatasetError or InvariantViolation on a broken manifest."""
        check_scene_ids([s.scene_id for s in self.scenes])
        for entry in self.scenes:
            if entry.split not in SPLITS:
                raise DatasetError(f"scene '{entry.scene_id}' has unknown split '{entry.split}'")
            for name, relative in entry.paths.items():
                if not (self.root / relative).is_file():
                    raise DatasetError(f"scene '{entry.scene_id}' is missing its {name} file '{relative}'")
        splits = {split: {s.scene_id for s in self.scenes if s.split == split} for split in SPLITS}
        if splits["train"] & splits["test"]:
            raise InvariantViolation("a scene appears in both splits")

    def entries(self, split: Optional[str] = None) -> list[SceneEntry]:
        return [s for s in self.scenes if split is None or s.split == split]

    def load_pair(self, entry: SceneEntry) -> tuple[IntensityRaster, IntensityRaster, LabelMask]:
        """(pre, post, labels) of one scene."""
        return (
            load_raster(self.root / entry.paths["pre"]),
            load_raster(self.root / entry.paths["post"]),
            load_label_mask(self.root / entry.paths["labels"]),
        )


def dataset_stats(manifest: DatasetManifest) -> dict[str, dict[str, Any]]:
    """Per split: pair count, oil pixels and oil-pixel ratio, recomputed from labels.png."""
    stats = {}
    for split in SPLITS:
        oil_pixels = total_pixels = 0
        entries = manifest.entries(split)
        for entry in entries:
            labels = load_label_mask(manifest.root / entry.paths["labels"])
            oil_pixels += int((labels.labels == OIL_LABEL).sum())
            total_pixels += labels.labels.size
        stats[split] = {
            "pairs": len(entries),
            "oil_pixels": oil_pixels,
            "oil_ratio": oil_pixels / total_pixels if total_pixels else 0.0,
        }
    return stats


@dataclass(frozen=True)
class SceneOutcome:
    scene_id: str
    seed: int
    accepted: bool
    reason: Optional[str] = None


def _process_scene(scene: InputScene, config_data: dict[str, Any], staging: str, skip_unreadable: bool) -> SceneOutcome:
    """Build one scene into the staging area. Runs inside an executor worker."""
    config = TahiConfig.from_dict(config_data)
    seed = seeding.derive_seed(config.master_seed, scene.scene_id)
    try:
        post = load_raster(scene.post_path)
        labels = load_label_mask(scene.labels_path)
    except InputError as e:
        if not skip_unreadable:
            raise
        logger.error(f"Skipping unreadable scene '{scene.scene_id}': {e}")
        return SceneOutcome(scene.scene_id, seed, False, f"unreadable: {e}")
    try:
        pair = build_pair(post, labels, config, seed, scene_id=scene.scene_id)
    except SceneRejectedError as e:
        logger.warning(f"Rejected scene '{scene.scene_id}': {e}")
        return SceneOutcome(scene.scene_id, seed, False, str(e))
    save_pair(pair, Path(staging) / scene.scene_id)
    return SceneOutcome(scene.scene_id, seed, True)


def _executor(jobs: int) -> Executor:
    if jobs > 1:
        return ProcessPoolExecutor(max_workers=jobs)
    return ThreadPoolExecutor(max_workers=1)


async def build_dataset_async(
    inputs: list[InputScene],
    out_dir: PathLike,
    config: TahiConfig,
    jobs: int = 1,
    skip_unreadable: bool = False,
) -> DatasetManifest:
    """
    Build every scene concurrently, then split and lay out the dataset.

    Per-scene seeds come from ``derive_seed(master_seed, scene_id)``, so the
    written tree does not depend on ``jobs``.
    """
    if not inputs:
        raise DatasetError("input list is empty")
    if jobs < 1:
        raise InputError(f"jobs must be >= 1, got {jobs}")
    config.ensure_valid()
    check_scene_ids([s.scene_id for s in inputs])

    root = Path(out_dir)
    staging = root / _STAGING
    if staging.exists():
        shutil.rmtree(staging)
    ensure_dir(staging)
    logger.info(f"Building {len(inputs)} scene(s) into {root} with {jobs} job(s)")

    loop = asyncio.get_running_loop()
    config_data = config.to_dict()
    try:
        with _executor(jobs) as pool:
            outcomes = await asyncio.gather(*(
                loop.run_in_executor(pool, _process_scene, scene, config_data, str(staging), skip_unreadable)
                for scene in inputs
            ))

        accepted = sorted((o for o in outcomes if o.accepted), key=lambda o: o.scene_id)
        rejected = sorted(
            ({"id": o.scene_id, "reason": o.reason} for o in outcomes if not o.accepted),
            key=lambda r: r["id"],
        )
        if not accepted:
            raise DatasetError("no scene was accepted")

        assignment = split_scenes([o.scene_id for o in accepted], config.split_fraction, config.master_seed)
        entries = []
        for outcome in accepted:
            split = assignment[outcome.scene_id]
            target = root / split / outcome.scene_id
            if target.exists():
                shutil.rmtree(target)
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.move(str(staging / outcome.scene_id), str(target))
            paths = {name: f"{split}/{outcome.scene_id}/{filename}" for name, filename in SCENE_FILES.items()}
            entries.append(SceneEntry(outcome.scene_id, split, outcome.seed, paths))
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    manifest = DatasetManifest(root=root, config=config_data, scenes=entries, rejected=rejected)
    manifest.stats = dataset_stats(manifest)
    manifest.validate()
    manifest.save()
    logger.info(f"Dataset written: {len(entries)} pair(s), {len(rejected)} rejected")
    return manifest


def build_dataset(
    inputs: list[InputScene],
    out_dir: PathLike,
    config: TahiConfig,
    jobs: int = 1,
    skip_unreadable: bool = False,
) -> DatasetManifest:
    """Synchronous wrapper around build_dataset_async."""
    return asyncio.run(build_dataset_async(inputs, out_dir, config, jobs, skip_unreadable))

