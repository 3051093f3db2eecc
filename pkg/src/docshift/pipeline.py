"""Config-driven batch runs: shifting whole datasets, validation, scoring.

Dataset layout on disk:
  <root>/annotations/<id>.json   FUNSD-style annotation, one per page (IE;
                                 optional for the other tasks)
  <root>/images/<id>.<ext>       page images (PNG/JPEG)
  <root>/labels.jsonl            classification sidecar
  <root>/qa.jsonl                VQA sidecar

Outputs keep the same layout, so shifted datasets are drop-in replacements.
"""

from __future__ import annotations

import hashlib
import logging
import random
import shutil
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace as dc_replace
from pathlib import Path
from typing import Optional

import yaml
from PIL import Image

from . import imageshift, layout, metrics, textshift
from .errors import ConfigError, DocshiftError, ParseError
from .manifest import TOOLKIT_VERSION, ShiftManifest, dataset_digest
from .model import (
    Document,
    QAPair,
    TaskPayload,
    Word,
    dataset_stats,
    parse_classification_sidecar,
    parse_ie_document,
    parse_vqa_sidecar,
    serialize_classification_sidecar,
    serialize_document,
    serialize_vqa_sidecar,
    SHIFT_KINDS,
    with_entities,
)
from .oracle import MaskedLMClient, OracleConnection, PredictorClient

log = logging.getLogger("docshift.pipeline")

TASKS = ("ie", "classification", "vqa")
IMAGE_EXTS = (".png", ".jpg", ".jpeg")

DEFAULT_PARAMS = {
    "original": {},
    "layout_merge": {"lambda1": 3, "lambda2": 1},
    "layout_move": {"trials": 30, "strength_threshold": 1.0, "count": 1},
    "text_swap": {"mode": "char_delete", "rate": 0.15, "k": 8},
    "text_bert": {"rate": 0.15, "k": 8},
    "image_natural": {},
    "image_distorted": {
        "amplitude": 4.0, "wavelength": 96.0, "perspective_strength": 0.0,
    },
}


@dataclass
class PipelineConfig:
    task: str = "ie"
    input: str = ""
    output: str = ""
    shift: str = "original"
    params: dict = dc_field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    oracle: dict = dc_field(default_factory=dict)     # predictor / masked_lm addresses
    resources: dict = dc_field(default_factory=dict)  # embedding_table, homoglyph_table, natural_images

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        return cls(**raw)

    def resolved_params(self) -> dict:
        if self.shift not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown shift kind {self.shift!r}")
        merged = dict(DEFAULT_PARAMS[self.shift])
        extra = set(self.params) - set(merged)
        if extra:
            raise ConfigError(
                f"parameters {sorted(extra)} not valid for shift {self.shift!r}"
            )
        merged.update(self.params)
        return merged

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.shift not in SHIFT_KINDS:
            raise ConfigError(f"unknown shift kind {self.shift!r}")
        if not Path(self.input).exists():
            raise ConfigError(f"input path {self.input!r} does not exist")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.resolved_params()
        if self.shift == "image_natural" and "natural_images" not in self.resources:
            raise ConfigError("image_natural requires resources.natural_images")
        if self.shift == "text_bert" and "masked_lm" not in self.oracle:
            raise ConfigError("text_bert requires oracle.masked_lm")
        if self.shift == "text_swap":
            params = self.resolved_params()
            if params["mode"] == "embedding" and "embedding_table" not in self.resources:
                raise ConfigError("embedding mode requires resources.embedding_table")
            if params["mode"] == "bert_attack" and "masked_lm" not in self.oracle:
                raise ConfigError("bert_attack mode requires oracle.masked_lm")

    def as_dict(self) -> dict:
        return {
            "task": self.task,
            "input": str(self.input),
            "output": str(self.output),
            "shift": self.shift,
            "params": dict(self.params),
            "seed": self.seed,
            "workers": self.workers,
            "oracle": dict(self.oracle),
            "resources": {k: str(v) for k, v in self.resources.items()},
        }


def derive_seed(master_seed: int, doc_id: str) -> int:
    """Per-document seed, stable across worker counts and scheduling."""
    digest = hashlib.sha256(f"{master_seed}:{doc_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class DatasetEntry:
    doc: Document
    image_file: Path
    annotation_file: Optional[Path] = None


def _find_image(images_dir: Path, stem: str) -> Path:
    for ext in IMAGE_EXTS:
        cand = images_dir / f"{stem}{ext}"
        if cand.exists():
            return cand
    raise ParseError(f"no image for document {stem!r} in {images_dir}")


def _image_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as img:
        return img.size  # (width, height)


def _entities_for(root: Path, stem: str, image_file: Path):
    ann = root / "annotations" / f"{stem}.json"
    if not ann.exists():
        return (), None
    width, height = _image_size(image_file)
    doc = parse_ie_document(ann.read_bytes(), str(image_file), width, height, doc_id=stem)
    return doc.entities, ann


def load_dataset(root, task: str) -> list[DatasetEntry]:
    root = Path(root)
    if not root.exists():
        raise ConfigError(f"dataset path {root} does not exist")
    entries: list[DatasetEntry] = []
    if task == "ie":
        ann_dir = root / "annotations"
        if not ann_dir.is_dir():
            raise ParseError(f"{root}: missing annotations/ directory")
        for ann in sorted(ann_dir.glob("*.json")):
            stem = ann.stem
            image_file = _find_image(root / "images", stem)
            width, height = _image_size(image_file)
            doc = parse_ie_document(
                ann.read_bytes(), str(image_file), width, height, doc_id=stem
            )
            entries.append(DatasetEntry(doc=doc, image_file=image_file, annotation_file=ann))
    elif task == "classification":
        sidecar = root / "labels.jsonl"
        if not sidecar.exists():
            raise ParseError(f"{root}: missing labels.jsonl")
        for image_rel, cls in parse_classification_sidecar(sidecar.read_bytes()):
            image_file = root / image_rel
            if not image_file.exists():
                raise ParseError(f"{sidecar}: image {image_rel!r} not found")
            stem = image_file.stem
            width, height = _image_size(image_file)
            entities, ann = _entities_for(root, stem, image_file)
            doc = Document(
                id=stem, image_path=str(image_file), width=width, height=height,
                entities=entities, task_payload=TaskPayload(class_id=cls),
            )
            entries.append(DatasetEntry(doc=doc, image_file=image_file, annotation_file=ann))
    elif task == "vqa":
        sidecar = root / "qa.jsonl"
        if not sidecar.exists():
            raise ParseError(f"{root}: missing qa.jsonl")
        grouped: dict[str, list[QAPair]] = {}
        order: list[str] = []
        for image_rel, question, answers in parse_vqa_sidecar(sidecar.read_bytes()):
            if image_rel not in grouped:
                grouped[image_rel] = []
                order.append(image_rel)
            grouped[image_rel].append(QAPair(question=question, answers=answers))
        for image_rel in order:
            image_file = root / image_rel
            if not image_file.exists():
                raise ParseError(f"{sidecar}: image {image_rel!r} not found")
            stem = image_file.stem
            width, height = _image_size(image_file)
            entities, ann = _entities_for(root, stem, image_file)
            doc = Document(
                id=stem, image_path=str(image_file), width=width, height=height,
                entities=entities, task_payload=TaskPayload(qa=tuple(grouped[image_rel])),
            )
            entries.append(DatasetEntry(doc=doc, image_file=image_file, annotation_file=ann))
    else:
        raise ConfigError(f"unknown task {task!r}")
    return entries


class _LockedOracle:
    """Serializes wire requests so pooled workers can share one connection."""

    def __init__(self, inner):
        self._inner = inner
        self._lock = threading.Lock()

    def predict(self, doc):
        with self._lock:
            return self._inner.predict(doc)

    def fill_mask(self, words, mask_index, k):
        with self._lock:
            return self._inner.fill_mask(words, mask_index, k)


@dataclass
class _Shared:
    """Resources loaded once per run."""
    params: dict
    embedding_table: Optional[textshift.EmbeddingTable] = None
    homoglyphs: Optional[dict] = None
    natural_pool: Optional[list[Path]] = None
    predictor: Optional[object] = None
    masked_lm: Optional[object] = None


def _load_shared(config: PipelineConfig) -> tuple[_Shared, list[OracleConnection]]:
    params = config.resolved_params()
    shared = _Shared(params=params)
    connections: list[OracleConnection] = []
    mode = params.get("mode")
    if config.shift == "text_swap" and mode == "embedding":
        shared.embedding_table = textshift.EmbeddingTable.load(config.resources["embedding_table"])
    if config.shift == "text_swap" and mode == "homoglyph":
        shared.homoglyphs = textshift.load_homoglyph_table(
            config.resources.get("homoglyph_table")
        )
    if config.shift == "image_natural":
        pool_dir = Path(config.resources["natural_images"])
        pool = sorted(
            p for p in pool_dir.iterdir()
            if p.suffix.lower() in IMAGE_EXTS
        )
        if not pool:
            raise ConfigError(f"no images in natural pool {pool_dir}")
        shared.natural_pool = pool
    if config.shift == "text_bert" or (config.shift == "text_swap" and mode == "bert_attack"):
        conn = OracleConnection(config.oracle["masked_lm"])
        connections.append(conn)
        shared.masked_lm = _LockedOracle(MaskedLMClient(conn))
    if config.shift == "layout_move" and "predictor" in config.oracle:
        conn = OracleConnection(config.oracle["predictor"])
        connections.append(conn)
        shared.predictor = _LockedOracle(PredictorClient(conn))
    return shared, connections


def _boxes_record(before: Document, after: Document) -> list:
    out = []
    for i, (wb, wa) in enumerate(zip(before.words, after.words)):
        if wb.box != wa.box:
            out.append([i, wb.box.as_list(), wa.box.as_list()])
    return out


def _text_record(result: textshift.TextShiftResult) -> dict:
    item = {
        "changes": [
            [c.word_index, c.before, c.after] for c in result.changes
        ],
    }
    if result.flagged:
        item["flagged"] = list(result.flagged)
    return item


def _shift_document(
    entry: DatasetEntry, config: PipelineConfig, shared: _Shared
) -> tuple[Document, Optional[bytes], dict]:
    """Returns (new document, new image PNG bytes or None to copy, item record)."""
    doc = entry.doc
    params = shared.params
    seed = derive_seed(config.seed, doc.id)
    kind = config.shift

    if kind == "original":
        return doc, None, {"changes": []}

    if kind == "layout_merge":
        merged = layout.apply_layout_merge(
            doc, layout.MergeParams(params["lambda1"], params["lambda2"])
        )
        result = layout.merge_boxes(
            [w.box for w in doc.words],
            layout.MergeParams(params["lambda1"], params["lambda2"]),
        )
        return merged, None, {
            "groups": len(result.merged_boxes),
            "changes": _boxes_record(doc, merged),
        }

    if kind == "layout_move":
        if shared.predictor is not None:
            strengths = layout.score_semantic_strength(
                doc, shared.predictor, trials=int(params["trials"]), rng_seed=seed
            )
        else:
            strengths = layout.heuristic_strengths(doc)
        image = imageshift.load_image(entry.image_file)
        rng = random.Random(derive_seed(seed, "move"))
        moved_doc, moved_img, records = layout.apply_layout_move(
            doc, image, strengths,
            strength_threshold=float(params["strength_threshold"]),
            count=int(params["count"]),
            rng=rng,
        )
        eligible = [
            s for s in strengths if s.strength >= float(params["strength_threshold"])
        ]
        item = {
            "moves": [
                {
                    "entity_id": r.entity_id,
                    "old_box": r.old_box.as_list(),
                    "new_box": r.new_box.as_list(),
                }
                for r in records
            ],
        }
        if eligible and not records:
            item["flagged"] = "no_placement"
            return doc, None, item
        if not records:
            return doc, None, item
        return moved_doc, imageshift.encode_png(moved_img), item

    if kind in ("text_swap", "text_bert"):
        mode = "bert_attack" if kind == "text_bert" else params["mode"]
        cfg = textshift.SwapConfig(
            mode=mode, rate=float(params["rate"]), k=int(params["k"]), seed=seed
        )
        if mode == "embedding":
            result = textshift.swap_by_embedding_detailed(doc, shared.embedding_table, cfg)
        elif mode == "homoglyph":
            result = textshift.swap_homoglyph_detailed(doc, cfg, shared.homoglyphs)
        elif mode == "number":
            result = textshift.swap_numbers_detailed(doc, cfg)
        elif mode == "char_delete":
            result = textshift.delete_characters_detailed(doc, cfg)
        elif mode == "bert_attack":
            result = textshift.bert_attack_detailed(doc, shared.masked_lm, cfg)
        else:
            raise ConfigError(f"unknown swap mode {mode!r}")
        return result.document, None, _text_record(result)

    if kind == "image_natural":
        rng = random.Random(seed)
        natural_file = shared.natural_pool[rng.randrange(len(shared.natural_pool))]
        image = imageshift.load_image(entry.image_file)
        mask = imageshift.extract_text_mask(image, [w.box for w in doc.words])
        composite = imageshift.replace_background(
            image, mask, imageshift.load_image(natural_file)
        )
        return doc, imageshift.encode_png(composite), {
            "natural_image": natural_file.name,
            "text_pixels": int(mask.bits.sum()),
        }

    if kind == "image_distorted":
        image = imageshift.load_image(entry.image_file)
        field = imageshift.synthesize_displacement_field(
            doc.width, doc.height,
            amplitude=float(params["amplitude"]),
            wavelength=float(params["wavelength"]),
            perspective_strength=float(params["perspective_strength"]),
            seed=seed,
        )
        boxes = [w.box for w in doc.words]
        warped_img, warped_boxes = imageshift.warp(image, boxes, field)
        entities, pos = [], 0
        for ent in doc.entities:
            words = []
            for w in ent.words:
                words.append(Word(text=w.text, box=warped_boxes[pos]))
                pos += 1
            box = words[0].box
            for w in words[1:]:
                box = box.union(w.box)
            entities.append(dc_replace(ent, words=tuple(words), box=box))
        warped_doc = with_entities(doc, entities)
        return warped_doc, imageshift.encode_png(warped_img), {
            "changes": _boxes_record(doc, warped_doc),
        }

    raise ConfigError(f"unknown shift kind {kind!r}")


def run_shift(config: PipelineConfig) -> tuple[ShiftManifest, int]:
    """Shift a whole dataset.  Returns the manifest and the failure count.

    Per-document failures are logged, flagged in the manifest, and skipped;
    the run continues.
    """
    config.validate()
    in_root, out_root = Path(config.input), Path(config.output)
    out_root.mkdir(parents=True, exist_ok=True)
    entries = load_dataset(in_root, config.task)
    shared, connections = _load_shared(config)

    def process(entry: DatasetEntry):
        return _shift_document(entry, config, shared)

    results: dict[str, tuple] = {}
    failures: dict[str, str] = {}
    try:
        if config.workers == 1:
            outcomes = []
            for entry in entries:
                try:
                    outcomes.append(process(entry))
                except DocshiftError as err:
                    outcomes.append(err)
        else:
            def safe(entry):
                try:
                    return process(entry)
                except DocshiftError as err:
                    return err
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                outcomes = list(pool.map(safe, entries))
    finally:
        for conn in connections:
            conn.close()

    for entry, outcome in zip(entries, outcomes):
        if isinstance(outcome, DocshiftError):
            log.error("document %s failed: %s", entry.doc.id, outcome)
            failures[entry.doc.id] = str(outcome)
        else:
            results[entry.doc.id] = outcome

    # write outputs; ordering is irrelevant to the digest, which sorts paths
    (out_root / "images").mkdir(exist_ok=True)
    write_annotations = config.task == "ie" or any(
        e.annotation_file is not None for e in entries
    )
    if write_annotations:
        (out_root / "annotations").mkdir(exist_ok=True)
    image_names: dict[str, str] = {}
    for entry in entries:
        if entry.doc.id not in results:
            continue
        new_doc, image_bytes, _ = results[entry.doc.id]
        if config.shift == "original":
            shutil.copyfile(
                entry.image_file, out_root / "images" / entry.image_file.name
            )
            image_names[entry.doc.id] = entry.image_file.name
            if entry.annotation_file is not None:
                shutil.copyfile(
                    entry.annotation_file,
                    out_root / "annotations" / entry.annotation_file.name,
                )
            continue
        if image_bytes is None:
            shutil.copyfile(
                entry.image_file, out_root / "images" / entry.image_file.name
            )
            image_names[entry.doc.id] = entry.image_file.name
        else:
            name = f"{entry.doc.id}.png"
            (out_root / "images" / name).write_bytes(image_bytes)
            image_names[entry.doc.id] = name
        if entry.annotation_file is not None or config.task == "ie":
            (out_root / "annotations" / f"{entry.doc.id}.json").write_bytes(
                serialize_document(new_doc)
            )

    _write_sidecars(config, in_root, out_root, entries, results, image_names)

    items = []
    for entry in entries:
        if entry.doc.id in failures:
            items.append({"id": entry.doc.id, "error": failures[entry.doc.id]})
        else:
            record = dict(results[entry.doc.id][2])
            record["id"] = entry.doc.id
            items.append(record)
    items.sort(key=lambda item: item["id"])

    manifest = ShiftManifest(
        toolkit_version=TOOLKIT_VERSION,
        seed=config.seed,
        task=config.task,
        shift=config.shift,
        params=shared.params,
        config=config.as_dict(),
        items=items,
        input_digest=dataset_digest(in_root),
        output_digest=dataset_digest(out_root),
    )
    manifest.write(out_root)
    return manifest, len(failures)


def _write_sidecars(config, in_root: Path, out_root: Path, entries, results, image_names):
    if config.task == "classification":
        if config.shift == "original":
            shutil.copyfile(in_root / "labels.jsonl", out_root / "labels.jsonl")
            return
        records = []
        for entry in entries:
            if entry.doc.id not in results:
                continue
            records.append(
                (f"images/{image_names[entry.doc.id]}", entry.doc.task_payload.class_id)
            )
        (out_root / "labels.jsonl").write_bytes(serialize_classification_sidecar(records))
    elif config.task == "vqa":
        if config.shift == "original":
            shutil.copyfile(in_root / "qa.jsonl", out_root / "qa.jsonl")
            return
        records = []
        for entry in entries:
            if entry.doc.id not in results:
                continue
            for pair in entry.doc.task_payload.qa:
                records.append(
                    (f"images/{image_names[entry.doc.id]}", pair.question, pair.answers)
                )
        (out_root / "qa.jsonl").write_bytes(serialize_vqa_sidecar(records))


def replay(manifest_path, output=None) -> tuple[bool, ShiftManifest]:
    """Re-run a manifest's recorded config and compare output digests."""
    recorded = ShiftManifest.read(manifest_path)
    config = PipelineConfig(**recorded.config)
    if output is not None:
        config.output = str(output)
    produced, failures = run_shift(config)
    ok = failures == 0 and produced.output_digest == recorded.output_digest
    return ok, produced


@dataclass
class ValidationReport:
    violations: list  # (file, message) pairs

    @property
    def valid(self) -> bool:
        return not self.violations


def validate_dataset(path, task: str) -> ValidationReport:
    """Schema, box, and id checks over every file of a dataset."""
    root = Path(path)
    if not root.exists():
        raise ConfigError(f"dataset path {path!r} does not exist")
    violations: list[tuple[str, str]] = []
    if task == "ie":
        ann_dir = root / "annotations"
        if not ann_dir.is_dir():
            return ValidationReport([(str(root), "missing annotations/ directory")])
        for ann in sorted(ann_dir.glob("*.json")):
            try:
                image_file = _find_image(root / "images", ann.stem)
                width, height = _image_size(image_file)
                parse_ie_document(ann.read_bytes(), str(image_file), width, height)
            except DocshiftError as err:
                violations.append((str(ann), str(err)))
    elif task in ("classification", "vqa"):
        sidecar = root / ("labels.jsonl" if task == "classification" else "qa.jsonl")
        if not sidecar.exists():
            return ValidationReport([(str(root), f"missing {sidecar.name}")])
        try:
            if task == "classification":
                records = parse_classification_sidecar(sidecar.read_bytes())
                images = [r[0] for r in records]
            else:
                records = parse_vqa_sidecar(sidecar.read_bytes())
                images = [r[0] for r in records]
            for image_rel in images:
                if not (root / image_rel).exists():
                    violations.append((str(sidecar), f"image {image_rel!r} not found"))
        except DocshiftError as err:
            violations.append((str(sidecar), str(err)))
        ann_dir = root / "annotations"
        if ann_dir.is_dir():
            for ann in sorted(ann_dir.glob("*.json")):
                try:
                    image_file = _find_image(root / "images", ann.stem)
                    width, height = _image_size(image_file)
                    parse_ie_document(ann.read_bytes(), str(image_file), width, height)
                except DocshiftError as err:
                    violations.append((str(ann), str(err)))
    else:
        raise ConfigError(f"unknown task {task!r}")
    return ValidationReport(violations)


def score_files(gold_path, predictions_path, task: str, tau: float = 0.5) -> metrics.ScoreReport:
    entries = load_dataset(gold_path, task)
    preds = metrics.load_predictions(Path(predictions_path).read_bytes(), task)
    return metrics.score_dataset([e.doc for e in entries], preds, tau=tau)


def dataset_statistics(path, task: str) -> dict:
    entries = load_dataset(path, task)
    return dataset_stats(e.doc for e in entries)
