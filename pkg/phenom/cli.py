#!/usr/bin/env python3
"""
phenom command-line driver.

    phenom synth --output-dir runs/synth --n_genes 60
    phenom train --config configs/train_mae.yaml --dataset runs/synth/dataset --output-dir runs/mae
    phenom embed --checkpoint runs/mae/model.pt --dataset runs/synth/dataset --output-dir runs/emb
    phenom transform --table runs/emb/embeddings --pipeline tvn --output-dir runs/tvn
    phenom benchmark --table runs/emb/embeddings --db runs/synth/relationships.csv --pipeline none --pipeline tvn --output-dir runs/bench
    phenom report --report runs/bench/report.json --markdown --output-dir runs/bench

Leftover ``--key value`` flags override the config document. Dotted keys
address a section (``--model.depth 4``); plain keys go to the command's
primary section.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from phenom.core.config import build_model, get_settings, load_document, merge_documents, parse_overrides
from phenom.core.exceptions import InvalidConfigError, PhenomError
from phenom.core.logger import PhenomLogger
from phenom.imaging.synthetic import SynthConfig
from phenom.models.ca_mae import EmbedMode
from phenom.models.config import ViTConfig
from phenom.Orchestration import commands
from phenom.Orchestration.manifest import RunManifest
from phenom.training.config import TrainConfig

logger = PhenomLogger.get_logger(__name__)

COMMAND_SECTIONS = {
    "synth": ("synth",),
    "train": ("train", "model"),
}


def split_sections(
    document: Dict[str, Any],
    overrides: Dict[str, Any],
    sections: Sequence[str],
) -> Dict[str, Dict[str, Any]]:
    """
    Route a run document and its CLI overrides into named sections. A
    document without any section key is treated as the first (primary)
    section.
    """
    primary = sections[0]
    if any(key in sections for key in document):
        unknown = sorted(set(document) - set(sections))
        if unknown:
            raise InvalidConfigError(f"Unknown config sections {unknown}; expected {list(sections)}")
        base = {s: dict(document.get(s) or {}) for s in sections}
    else:
        base = {s: {} for s in sections}
        base[primary] = dict(document)

    routed: Dict[str, Dict[str, Any]] = {s: {} for s in sections}
    for key, value in overrides.items():
        if key in sections and isinstance(value, dict):
            routed[key] = merge_documents(routed[key], value)
        else:
            routed[primary][key] = value
    return {s: merge_documents(base[s], routed[s]) for s in sections}


def _channels(raw: Optional[str]) -> Optional[List[str]]:
    return [c.strip() for c in raw.split(",") if c.strip()] if raw else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phenom", description="Microscopy representation learning and benchmarking")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="YAML run document")
        p.add_argument("--seed", type=int, default=None, help="Global seed (falls back to PHENOM_SEED)")
        p.add_argument("--workers", type=int, default=None, help="Thread pool bound (falls back to PHENOM_WORKERS)")
        p.add_argument("--output-dir", type=Path, required=True, help="Directory for artifacts and manifest.json")
        p.add_argument("--log-level", default=None, help="Overrides PHENOM_LOG_LEVEL")

    p = sub.add_parser("synth", help="Generate a synthetic screening dataset with planted relationships")
    add_common(p)
    p.add_argument("--no-features", action="store_true", help="Skip the CellProfiler-style feature table")

    p = sub.add_parser("train", help="Train an MAE, CA-MAE or weakly supervised ViT")
    add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--resume", type=Path, default=None, help="Checkpoint to resume from")
    p.add_argument("--channels", default=None, help="Comma-separated channel subset")

    p = sub.add_parser("embed", help="Embed every well of a dataset")
    add_common(p)
    p.add_argument("--dataset", type=Path, required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", type=Path)
    source.add_argument("--baseline", choices=["pixel_stats", "random"])
    p.add_argument("--mode", choices=[m.value for m in EmbedMode], default=EmbedMode.MEAN_ALL.value)
    p.add_argument("--channels", default=None, help="Comma-separated channel subset")

    p = sub.add_parser("transform", help="Apply a transform pipeline to an embedding table")
    add_common(p)
    p.add_argument("--table", type=Path, required=True, help="Embedding table stem")
    p.add_argument("--pipeline", required=True, help='e.g. "center_by:plate_id,tvn"')

    p = sub.add_parser("benchmark", help="Recall, retrieval and feature-regression benchmarks")
    add_common(p)
    p.add_argument("--table", type=Path, required=True, help="Embedding table stem")
    p.add_argument("--db", type=Path, action="append", default=[], help="Relationship pair CSV (repeatable)")
    p.add_argument("--pipeline", action="append", default=None, help="Transform pipeline (repeatable)")
    p.add_argument("--retrieval", action="append", default=[], choices=["perturbation", "siblings"])
    p.add_argument("--sibling-db", type=Path, default=None)
    p.add_argument("--features", type=Path, default=None, help="Feature table CSV")
    p.add_argument("--test-experiment", default=None)
    p.add_argument("--tail-pct", type=float, default=5.0)
    p.add_argument("--n-permutations", type=int, default=1000)
    p.add_argument("--q-threshold", type=float, default=0.05)
    p.add_argument("--random-baseline", action="store_true")
    p.add_argument("--cell-type", default=None)
    p.add_argument("--modality", default=None)
    p.add_argument("--time-point", default=None)

    p = sub.add_parser("report", help="Re-render a benchmark report")
    add_common(p)
    p.add_argument("--report", type=Path, required=True)
    p.add_argument("--markdown", action="store_true")
    return parser


def run_command(args: argparse.Namespace, overrides: Dict[str, Any], manifest: RunManifest) -> Dict[str, Path]:
    settings = get_settings()
    out = args.output_dir
    workers = args.workers if args.workers is not None else settings.WORKERS
    if workers < 1:
        raise InvalidConfigError(f"--workers must be >= 1, got {workers}")

    if args.command in COMMAND_SECTIONS:
        sections = split_sections(load_document(args.config), overrides, COMMAND_SECTIONS[args.command])
        primary = sections[COMMAND_SECTIONS[args.command][0]]
        if args.seed is not None:
            primary["seed"] = args.seed
        primary.setdefault("seed", settings.SEED)
        manifest.seed = primary["seed"]
        manifest.parameters = sections

        if args.command == "synth":
            config = build_model(SynthConfig, sections["synth"])
            return commands.cmd_synth(config, out, with_features=not args.no_features)

        model_config = build_model(ViTConfig, sections["model"])
        train_config = build_model(TrainConfig, sections["train"])
        return commands.cmd_train(model_config, train_config, args.dataset, out, resume_from=args.resume,
                                  channels=_channels(args.channels), device=settings.DEVICE)

    if overrides:
        raise InvalidConfigError(f"{args.command} takes no config overrides, got {sorted(overrides)}")
    seed = args.seed if args.seed is not None else settings.SEED
    manifest.seed = seed

    if args.command == "embed":
        manifest.parameters = {"baseline": args.baseline, "mode": args.mode, "channels": args.channels}
        return commands.cmd_embed(args.dataset, out, checkpoint=args.checkpoint, baseline=args.baseline,
                                  mode=EmbedMode(args.mode), channels=_channels(args.channels),
                                  seed=seed, workers=workers)
    if args.command == "transform":
        manifest.parameters = {"pipeline": args.pipeline}
        return commands.cmd_transform(args.table, args.pipeline, out)
    if args.command == "benchmark":
        pipelines = args.pipeline or ["none"]
        manifest.parameters = {"pipelines": pipelines, "retrieval": args.retrieval, "tail_pct": args.tail_pct}
        context = {"cell_type": args.cell_type, "modality": args.modality, "time_point": args.time_point}
        return commands.cmd_benchmark(
            args.table, out,
            db_files=args.db,
            pipelines=pipelines,
            retrieval_tasks=args.retrieval,
            sibling_db_file=args.sibling_db,
            feature_file=args.features,
            test_experiment=args.test_experiment,
            tail_pct=args.tail_pct,
            n_permutations=args.n_permutations,
            q_threshold=args.q_threshold,
            random_baseline=args.random_baseline,
            context=context,
            seed=seed,
            workers=workers,
        )
    return commands.cmd_report(args.report, out, markdown=args.markdown)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    settings = get_settings()
    try:
        run_log = PhenomLogger.setup_logging(
            log_level=args.log_level or settings.LOG_LEVEL,
            log_dir=settings.LOG_DIR,
            run_dir=args.output_dir,
        )
    except InvalidConfigError as e:
        parser.error(str(e))
    try:
        return _run(args, extra, settings, run_log)
    finally:
        PhenomLogger.shutdown()


def _run(args: argparse.Namespace, extra: List[str], settings, run_log: Optional[Path]) -> int:
    manifest = RunManifest(
        command=args.command,
        config_path=str(args.config) if args.config else None,
        seed=args.seed if args.seed is not None else settings.SEED,
        output_dir=str(args.output_dir),
    )
    logger.info(f"--- phenom {args.command} -> {args.output_dir} ---")
    try:
        overrides = parse_overrides(extra)
        outputs = run_command(args, overrides, manifest)
    except (PhenomError, OSError, yaml.YAMLError) as e:
        logger.critical(f"{args.command} failed: {e}", exc_info=True)
        manifest.finish("failed")
        manifest.parameters.setdefault("error", str(e))
        _write_manifest(manifest)
        return 1

    manifest.outputs = {name: str(path) for name, path in outputs.items()}
    if run_log is not None:
        manifest.outputs["log"] = str(run_log)
    manifest.finish("ok")
    _write_manifest(manifest)
    for name, path in outputs.items():
        logger.info(f"{name}: {path}")
    return 0



def _write_manifest(manifest: RunManifest) -> None:
    try:
        manifest.write()
    except OSError as e:
        logger.error(f"Could not write manifest to {manifest.output_dir}: {e}")


if __name__ == "__main__":
    sys.exit(main())
