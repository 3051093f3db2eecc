"""Command-line entry point: shift, validate, stats, score, replay."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import DocshiftError
from .model import SHIFT_KINDS
from .pipeline import (
    PipelineConfig,
    dataset_statistics,
    replay,
    run_shift,
    score_files,
    validate_dataset,
)

PARAM_FLAGS = (
    ("lambda1", int), ("lambda2", int), ("rate", float), ("k", int),
    ("amplitude", float), ("wavelength", float), ("perspective_strength", float),
    ("trials", int), ("strength_threshold", float), ("count", int), ("mode", str),
)


def _setup_logging() -> None:
    level = os.environ.get("DOCSHIFT_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _add_shift_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, help="YAML pipeline config")
    sub.add_argument("--task", choices=("ie", "classification", "vqa"))
    sub.add_argument("--input", help="input dataset directory")
    sub.add_argument("--output", help="output dataset directory")
    sub.add_argument("--shift", choices=SHIFT_KINDS, help="shift kind")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--oracle", help="predictor oracle address (host:port or exec:CMD)")
    sub.add_argument("--masked-lm", help="masked-LM oracle address")
    sub.add_argument("--embedding-table", help="word-vector table path")
    sub.add_argument("--homoglyph-table", help="confusable-character table path")
    sub.add_argument("--natural-images", help="directory of natural background images")
    for name, kind in PARAM_FLAGS:
        sub.add_argument(f"--{name.replace('_', '-')}", type=kind, dest=f"param_{name}")


def _build_config(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    for key in ("task", "input", "output", "shift", "seed", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "oracle", None):
        config.oracle["predictor"] = args.oracle
    if getattr(args, "masked_lm", None):
        config.oracle["masked_lm"] = args.masked_lm
    for res in ("embedding_table", "homoglyph_table", "natural_images"):
        value = getattr(args, res, None)
        if value:
            config.resources[res] = value
    for name, _ in PARAM_FLAGS:
        value = getattr(args, f"param_{name}", None)
        if value is not None:
            config.params[name] = value
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docshift",
        description="Generate distribution-shifted document datasets and score predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    shift = sub.add_parser("shift", help="shift a dataset and emit a manifest")
    _add_shift_args(shift)

    validate = sub.add_parser("validate", help="check a dataset against the schema")
    validate.add_argument("path")
    validate.add_argument("--task", default="ie", choices=("ie", "classification", "vqa"))

    stats = sub.add_parser("stats", help="summarize a dataset")
    stats.add_argument("path")
    stats.add_argument("--task", default="ie", choices=("ie", "classification", "vqa"))

    score = sub.add_parser("score", help="score a prediction file against gold")
    score.add_argument("gold")
    score.add_argument("predictions")
    score.add_argument("--task", default="ie", choices=("ie", "classification", "vqa"))
    score.add_argument("--tau", type=float, default=0.5, help="ANLS threshold")
    score.add_argument("--report", type=Path, help="write the machine-readable report here")

    rep = sub.add_parser("replay", help="re-run a manifest and verify the digest")
    rep.add_argument("manifest")
    rep.add_argument("--output", help="directory for the replayed dataset")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except DocshiftError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "shift":
        config = _build_config(args)
        manifest, failures = run_shift(config)
        print(f"shifted {len(manifest.items) - failures} documents "
              f"({failures} failed) -> {config.output}")
        print(f"output digest {manifest.output_digest}")
        return 1 if failures else 0

    if args.command == "validate":
        report = validate_dataset(args.path, args.task)
        if report.valid:
            print("valid")
            return 0
        for file, message in report.violations:
            print(f"{file}: {message}")
        return 1

    if args.command == "stats":
        print(json.dumps(dataset_statistics(args.path, args.task), indent=2))
        return 0

    if args.command == "score":
        report = score_files(args.gold, args.predictions, args.task, tau=args.tau)
        payload = report.as_dict()
        width = max(len(k) for k in payload) if payload else 0
        for key, value in payload.items():
            if key == "per_label_error":
                for label, rate in value.items():
                    print(f"{label + ' error':<{width + 6}} {100 * rate:6.2f}")
            else:
                print(f"{key:<{width + 6}} {100 * value:6.2f}")
        if args.report:
            args.report.write_text(json.dumps(payload, indent=2) + "\n")
        return 0

    if args.command == "replay":
        out = args.output
        if out is None:
            import tempfile
            out = tempfile.mkdtemp(prefix="docshift-replay-")
        ok, manifest = replay(args.manifest, out)
        print(f"replayed into {out}")
        print(f"digest {'matches' if ok else 'MISMATCH'}: {manifest.output_digest}")
        return 0 if ok else 1

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
