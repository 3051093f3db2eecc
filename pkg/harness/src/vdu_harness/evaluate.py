"""Batch evaluation: run a token classifier across annotated dataset
directories and write one prediction file per dataset.

Dataset layout and prediction schema follow the shift toolkit's published
formats: annotations/<id>.json holds a "form" list of entities with word
text and boxes; output is JSONL records {"id": ..., "tags": [...]} that the
toolkit's `score` command consumes directly.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from .backends import PredictorBackend

log = logging.getLogger("vdu_harness.evaluate")


def read_annotation(path: Path) -> list[dict]:
    """Word records in document order, mirroring the toolkit's cleanup:
    whitespace-only words are dropped, as are entities left empty."""
    payload = json.loads(path.read_text(encoding="utf-8"))
    words = []
    for entity in payload.get("form", []):
        kept = [
            {"text": w["text"].strip(), "box": [int(v) for v in w["box"]]}
            for w in entity.get("words", [])
            if w.get("text", "").strip()
        ]
        words.extend(kept)
    return words


def evaluate_dataset(backend: PredictorBackend, dataset: Path) -> list[dict]:
    records = []
    for ann in sorted((dataset / "annotations").glob("*.json")):
        words = read_annotation(ann)
        records.append({"id": ann.stem, "tags": backend.predict(words)})
    return records


def evaluate(backend: PredictorBackend, datasets, out_dir) -> list[Path]:
    """One prediction file per dataset, named after the dataset directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for dataset in map(Path, datasets):
        records = evaluate_dataset(backend, dataset)
        target = out_dir / f"{dataset.name}.jsonl"
        with open(target, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        log.info("%s: %d documents -> %s", dataset, len(records), target)
        written.append(target)
    return written
