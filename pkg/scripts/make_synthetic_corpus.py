#!/usr/bin/env python3
"""Generate a synthetic annotated document dataset for smoke tests and demos.

Pages are white with rendered black text; annotations follow the same
form/words layout the toolkit parses.  Not a substitute for real scans, but
enough to exercise every shift kind end to end.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from synthcorpus import make_corpus, make_natural_pool  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("output", type=Path, help="dataset directory to create")
    parser.add_argument("--docs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--width", type=int, default=480)
    parser.add_argument("--height", type=int, default=320)
    parser.add_argument("--entities", type=int, default=10)
    parser.add_argument("--task", default="ie",
                        choices=("ie", "classification", "vqa"))
    parser.add_argument("--natural-pool", type=Path,
                        help="also write a directory of random background images")
    args = parser.parse_args()

    root = make_corpus(args.output, n_docs=args.docs, seed=args.seed,
                       width=args.width, height=args.height,
                       entities_per_doc=args.entities, task=args.task)
    print(f"wrote {args.docs} documents to {root}")
    if args.natural_pool:
        pool = make_natural_pool(args.natural_pool, n_images=8, seed=args.seed)
        print(f"wrote natural-image pool to {pool}")


if __name__ == "__main__":
    main()
