#!/usr/bin/env python3
"""Sweep the merge dilation distances over a dataset and report group counts.

Prints one row per (lambda1, lambda2) pair: the mean number of merged boxes
per document and the mean reduction versus the unmerged word count.  Useful
for picking dilation distances that produce the desired coarseness before
committing to a full shift run.
"""

import argparse
import itertools

from docshift.layout import MergeParams, merge_boxes
from docshift.pipeline import load_dataset


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("dataset", help="annotated dataset directory")
    parser.add_argument("--lambda1", type=int, nargs="+", default=[0, 1, 2, 3, 5, 8])
    parser.add_argument("--lambda2", type=int, nargs="+", default=[0, 1, 2, 3])
    args = parser.parse_args()

    docs = [e.doc for e in load_dataset(args.dataset, "ie")]
    total_words = sum(len(d.words) for d in docs)
    print(f"{len(docs)} documents, {total_words} word boxes")
    print(f"{'l1':>4} {'l2':>4} {'groups/doc':>11} {'reduction':>10}")
    for l1, l2 in itertools.product(args.lambda1, args.lambda2):
        params = MergeParams(l1, l2)
        groups = sum(
            len(merge_boxes([w.box for w in d.words], params).merged_boxes)
            for d in docs
        )
        print(f"{l1:>4} {l2:>4} {groups / len(docs):>11.1f} "
              f"{1 - groups / total_words:>9.1%}")


if __name__ == "__main__":
    main()
