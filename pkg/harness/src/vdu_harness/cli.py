"""Command-line entry point: serve the oracle protocols or batch-evaluate."""

from __future__ import annotations

import argparse
import logging
import os
import sys


def _setup_logging() -> None:
    level = os.environ.get("VDU_HARNESS_LOG", "warning").upper()
    # stdout carries protocol traffic; logs must stay on stderr
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vdu-harness",
        description="Serve masked-LM / word-labeling oracles and run batch evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="answer oracle requests")
    serve.add_argument("--kind", required=True, choices=("masked-lm", "predictor"))
    serve.add_argument("--model", required=True, help="checkpoint path or hub id")
    serve.add_argument("--device", default="cpu")
    serve.add_argument("--transport", default="stdio", choices=("stdio", "tcp"))
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8750)

    ev = sub.add_parser("evaluate", help="write prediction files for datasets")
    ev.add_argument("datasets", nargs="+", help="annotated dataset directories")
    ev.add_argument("--model", required=True, help="token-classification checkpoint")
    ev.add_argument("--device", default="cpu")
    ev.add_argument("--out", required=True, help="directory for prediction files")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    from .backends import MaskedLMBackend, OracleServerConfig, PredictorBackend
    from . import protocol

    config = OracleServerConfig(model=args.model, device=args.device)

    if args.command == "serve":
        if args.kind == "masked-lm":
            backend = MaskedLMBackend(config)
            kwargs = {"fill_mask": backend.fill_mask}
        else:
            backend = PredictorBackend(config)
            kwargs = {"predict": backend.predict}
        print(f"serving {args.kind} oracle with {args.model}", file=sys.stderr)
        if args.transport == "stdio":
            protocol.serve_stdio(**kwargs)
        else:
            protocol.serve_tcp(args.host, args.port, **kwargs)
        return 0

    if args.command == "evaluate":
        from .evaluate import evaluate

        backend = PredictorBackend(config)
        written = evaluate(backend, args.datasets, args.out)
        for path in written:
            print(path)
        print(f"checkpoint: {args.model}", file=sys.stderr)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
