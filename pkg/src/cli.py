"""Command-line front end: synthesis, dataset building and both evaluation suites."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from src import seeding
from src.ablation import run_ablation
from src.config import TahiConfig
from src.dataset import (
    DatasetManifest,
    build_dataset,
    build_pair,
    dataset_stats,
    ensure_dir,
    load_input_list,
    write_json,
)
from src.errors import InputError, TahiError
from src.metrics.change import benchmark, cd_eval, diff_otsu, summarize_runs
from src.metrics.quality import restoration_report
from src.raster import (
    OIL_LABEL,
    load_binary_mask,
    load_label_mask,
    load_raster,
    save_binary_mask,
    save_raster,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
INTERNAL_ERROR_EXIT = 4


class UsageError(InputError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    if text == "random":
        return seeding.entropy_seed()
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer or 'random', got '{text}'") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def setup_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def _load_config(args: argparse.Namespace) -> TahiConfig:
    config = TahiConfig.from_json(args.config) if getattr(args, "config", None) else TahiConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, master_seed=args.seed)
    if getattr(args, "split", None) is not None:
        config = replace(config, split_fraction=args.split)
    return config.ensure_valid()


def cmd_synth(args: argparse.Namespace) -> int:
    config = _load_config(args)
    post = load_raster(args.post)
    labels = load_label_mask(args.labels)
    scene_id = Path(args.post).stem
    scene_seed = seeding.derive_seed(config.master_seed, scene_id)
    pair = build_pair(post, labels, config, scene_seed, scene_id=scene_id)

    out_dir = ensure_dir(args.out_dir)
    outputs = [out_dir / "pre.fras", out_dir / "change_gt.png", out_dir / "provenance.json"]
    save_raster(pair.pre, outputs[0])
    save_binary_mask(pair.change_gt, outputs[1])
    write_json(pair.provenance.to_dict(), outputs[2])
    for path in outputs:
        print(path)
    return 0


def cmd_dataset_build(args: argparse.Namespace) -> int:
    config = _load_config(args)
    inputs = load_input_list(args.inputs)
    manifest = build_dataset(inputs, args.out, config, jobs=args.jobs, skip_unreadable=args.skip_unreadable)
    print(manifest.root / "manifest.json")
    return 0


def cmd_dataset_stats(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.dataset)
    stats = dataset_stats(manifest)
    if manifest.stats and manifest.stats != stats:
        logger.warning("Cached manifest statistics differ from the label files")
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_eval_restore(args: argparse.Namespace) -> int:
    original = load_raster(args.original)
    restored = load_raster(args.restored)
    omega = load_binary_mask(args.omega)
    sea_roi = load_binary_mask(args.sea_roi)
    before, after = restoration_report(original, restored, omega, sea_roi, ring_width=args.ring_width)
    write_json({"version": 1, "original": before.to_dict(), "restored": after.to_dict()}, args.report)
    print(args.report)
    return 0


def cmd_eval_ablation(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = run_ablation(config, scenes=args.scenes, seed=config.master_seed, size=args.size)
    write_json({"version": 1, "master_seed": config.master_seed, **result.to_dict()}, args.report)
    print(args.report)
    return 0


def _otsu_bins(args: argparse.Namespace) -> int:
    if args.bins is not None:
        return args.bins
    return _load_config(args).otsu_bins


def cmd_cd_diff_otsu(args: argparse.Namespace) -> int:
    mask = diff_otsu(load_raster(args.pre), load_raster(args.post), bins=_otsu_bins(args))
    save_binary_mask(mask, args.out)
    print(args.out)
    return 0


def cmd_cd_eval(args: argparse.Namespace) -> int:
    gt = load_binary_mask(args.gt)
    reports = [cd_eval(load_binary_mask(path), gt, oil_gt=args.oil_gt) for path in args.pred]
    if len(reports) == 1:
        document = reports[0].to_dict()
    else:
        document = summarize_runs(reports)
    write_json({"version": 1, **document}, args.report)
    print(args.report)
    return 0


def cmd_cd_benchmark(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.dataset)
    entries = manifest.entries(args.subset)
    if not entries:
        raise InputError(f"split '{args.subset}' of '{args.dataset}' holds no pairs")

    def pairs():
        for entry in entries:
            pre, post, labels = manifest.load_pair(entry)
            yield pre, post, labels.mask_of(OIL_LABEL)

    document = benchmark(pairs(), bins=_otsu_bins(args))
    write_json({"version": 1, "split": args.subset, **document}, args.report)
    print(args.report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tahi", description="Synthetic pre-event SAR pairs for oil-spill change detection")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging on standard error")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seeded(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--seed", type=_seed, default=None, help="integer or 'random' (default: config master_seed, 0)")
        sub.add_argument("--config", help="JSON config with TahiConfig field names")

    synth = commands.add_parser("synth", help="synthesize the pre-event raster of one scene")
    synth.add_argument("--post", required=True)
    synth.add_argument("--labels", required=True)
    synth.add_argument("--out-dir", required=True)
    seeded(synth)
    synth.set_defaults(handler=cmd_synth)

    dataset = commands.add_parser("dataset", help="build or inspect a bi-temporal dataset")
    dataset_commands = dataset.add_subparsers(dest="dataset_command", required=True, parser_class=_Parser)
    build = dataset_commands.add_parser("build")
    build.add_argument("--inputs", required=True, help="JSON list of {post, labels[, id]}")
    build.add_argument("--out", required=True)
    build.add_argument("--split", type=float, default=None, help="train fraction (default 0.9)")
    build.add_argument("--jobs", type=int, default=1)
    build.add_argument("--skip-unreadable", action="store_true", help="log and skip unreadable scenes instead of aborting")
    seeded(build)
    build.set_defaults(handler=cmd_dataset_build)
    stats = dataset_commands.add_parser("stats")
    stats.add_argument("--dataset", required=True)
    stats.set_defaults(handler=cmd_dataset_stats)

    evaluate = commands.add_parser("eval", help="restoration quality")
    eval_commands = evaluate.add_subparsers(dest="eval_command", required=True, parser_class=_Parser)
    restore = eval_commands.add_parser("restore")
    restore.add_argument("--original", required=True)
    restore.add_argument("--restored", required=True)
    restore.add_argument("--omega", required=True)
    restore.add_argument("--sea-roi", required=True)
    restore.add_argument("--report", required=True)
    restore.add_argument("--ring-width", type=int, default=5)
    restore.set_defaults(handler=cmd_eval_restore)
    ablation = eval_commands.add_parser("ablation")
    ablation.add_argument("--scenes", type=int, default=50)
    ablation.add_argument("--size", type=int, default=96)
    ablation.add_argument("--report", required=True)
    seeded(ablation)
    ablation.set_defaults(handler=cmd_eval_ablation)

    cd = commands.add_parser("cd", help="Diff-Otsu change detection and scoring")
    cd_commands = cd.add_subparsers(dest="cd_command", required=True, parser_class=_Parser)
    otsu = cd_commands.add_parser("diff-otsu")
    otsu.add_argument("--pre", required=True)
    otsu.add_argument("--post", required=True)
    otsu.add_argument("--out", required=True)
    otsu.add_argument("--bins", type=int, default=None, help="histogram bins (default: config otsu_bins)")
    otsu.add_argument("--config", help="JSON config with TahiConfig field names")
    otsu.set_defaults(handler=cmd_cd_diff_otsu)
    score = cd_commands.add_parser("eval")
    score.add_argument("--pred", required=True, nargs="+", help="one mask per run")
    score.add_argument("--gt", required=True)
    score.add_argument("--report", required=True)
    score.add_argument("--oil-gt", action="store_true", help="ground truth is the oil mask; also report OSIoU")
    score.set_defaults(handler=cmd_cd_eval)
    bench = cd_commands.add_parser("benchmark")
    bench.add_argument("--dataset", required=True)
    bench.add_argument("--split", dest="subset", choices=("train", "test"), default="test")
    bench.add_argument("--report", required=True)
    bench.add_argument("--bins", type=int, default=None, help="histogram bins (default: config otsu_bins)")
    bench.add_argument("--config", help="JSON config with TahiConfig field names")
    bench.set_defaults(handler=cmd_cd_benchmark)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.verbose)
        return args.handler(args)
    except TahiError as e:
        message = str(e).replace("\n", " ")
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        print(f"error: {type(e).__name__}: {str(e)}".replace("\n", " "), file=sys.stderr)
        return INTERNAL_ERROR_EXIT


def main() -> None:
    sys.exit(run())
