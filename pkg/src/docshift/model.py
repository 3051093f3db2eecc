"""Core domain types and annotation I/O for document-image datasets.

The on-disk IE format is the FUNSD schema: one JSON file per page with a
top-level ``form`` list of entities, each carrying words, boxes, a label and
links.  Classification and VQA tasks use JSONL sidecar files, one record per
image.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .errors import ParseError, ValidationError

ENTITY_LABELS = ("header", "question", "answer", "other")
NUM_DOC_CLASSES = 16


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Integer rectangle, pixel space or normalized thousandths.

    Coordinates are half-open for pixel indexing: the region spans
    ``[x1, x2) x [y1, y2)``.
    """

    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if self.x2 < self.x1:
            raise ValidationError(f"x2 < x1 in box {self.as_list()}")
        if self.y2 < self.y1:
            raise ValidationError(f"y2 < y1 in box {self.as_list()}")

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    def as_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]

    def dilate(self, dx: int, dy: int) -> "BoundingBox":
        return BoundingBox(self.x1 - dx, self.y1 - dy, self.x2 + dx, self.y2 + dy)

    def translate(self, dx: int, dy: int) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def intersects(self, other: "BoundingBox") -> bool:
        """Closed-rectangle intersection: touching edges count."""
        return (
            self.x1 <= other.x2
            and other.x1 <= self.x2
            and self.y1 <= other.y2
            and other.y1 <= self.y2
        )

    def overlaps(self, other: "BoundingBox") -> bool:
        """Open intersection: the rectangles share at least one pixel."""
        return (
            self.x1 < other.x2
            and other.x1 < self.x2
            and self.y1 < other.y2
            and other.y1 < self.y2
        )

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(
            min(self.x1, other.x1),
            min(self.y1, other.y1),
            max(self.x2, other.x2),
            max(self.y2, other.y2),
        )

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and self.x2 >= other.x2
            and self.y2 >= other.y2
        )

    def clamp(self, width: int, height: int) -> "BoundingBox":
        clip = lambda v, hi: max(0, min(v, hi))
        return BoundingBox(
            clip(self.x1, width), clip(self.y1, height),
            clip(self.x2, width), clip(self.y2, height),
        )


@dataclass(frozen=True)
class Word:
    text: str
    box: BoundingBox


@dataclass(frozen=True)
class Entity:
    id: int
    words: tuple[Word, ...]
    box: BoundingBox
    label: Optional[str] = None
    links: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class QAPair:
    question: str
    answers: tuple[str, ...]


@dataclass(frozen=True)
class TaskPayload:
    class_id: Optional[int] = None
    qa: tuple[QAPair, ...] = ()


@dataclass(frozen=True)
class Document:
    id: str
    image_path: str
    width: int
    height: int
    entities: tuple[Entity, ...] = ()
    task_payload: Optional[TaskPayload] = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"document {self.id}: nonpositive page size")
        ids = [e.id for e in self.entities]
        if len(ids) != len(set(ids)):
            dup = [i for i, c in Counter(ids).items() if c > 1]
            raise ValidationError(f"document {self.id}: duplicate entity ids {dup}")

    @property
    def words(self) -> tuple[Word, ...]:
        return tuple(w for e in self.entities for w in e.words)

    def word_spans(self) -> list[tuple[Entity, int, int]]:
        """Each entity with its half-open range in the flat word sequence."""
        spans, pos = [], 0
        for ent in self.entities:
            spans.append((ent, pos, pos + len(ent.words)))
            pos += len(ent.words)
        return spans


SHIFT_KINDS = (
    "original",
    "image_natural",
    "image_distorted",
    "text_bert",
    "text_swap",
    "layout_merge",
    "layout_move",
)


@dataclass(frozen=True)
class ShiftKind:
    kind: str
    params: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ValidationError(f"unknown shift kind {self.kind!r}")

    @property
    def param_dict(self) -> dict:
        return dict(self.params)


def _parse_box(raw, path: str) -> BoundingBox:
    if (
        not isinstance(raw, (list, tuple))
        or len(raw) != 4
        or not all(isinstance(v, int) for v in raw)
    ):
        raise ParseError(f"{path}: box must be a list of 4 integers, got {raw!r}")
    try:
        return BoundingBox(*raw)
    except ValidationError as err:
        raise ValidationError(f"{path}: {err}") from err


def parse_ie_document(
    data: bytes | str,
    image_path: str,
    width: int,
    height: int,
    doc_id: Optional[str] = None,
) -> Document:
    """Parse a FUNSD-style annotation record into a Document.

    Word boxes are clamped to the page; entity boxes are recomputed as the
    union of word boxes.  Words with empty text are dropped, as are entities
    left with no words.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        record = json.loads(data)
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON: {err}") from err
    if not isinstance(record, dict) or "form" not in record:
        raise ParseError("missing top-level 'form' list")
    if not isinstance(record["form"], list):
        raise ParseError("'form' is not a list")

    entities = []
    for i, raw in enumerate(record["form"]):
        path = f"form[{i}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{path}: entity is not an object")
        if "id" not in raw or not isinstance(raw["id"], int):
            raise ParseError(f"{path}: missing integer 'id'")
        label = raw.get("label")
        if label is not None:
            if label not in ENTITY_LABELS:
                raise ValidationError(f"{path}: unknown label {label!r}")
        words = []
        for j, rw in enumerate(raw.get("words", [])):
            wpath = f"{path}.words[{j}]"
            if not isinstance(rw, dict) or "text" not in rw or "box" not in rw:
                raise ParseError(f"{wpath}: word needs 'text' and 'box'")
            text = rw["text"]
            if not isinstance(text, str):
                raise ParseError(f"{wpath}: text is not a string")
            if not text:
                continue
            box = _parse_box(rw["box"], f"{wpath}.box").clamp(width, height)
            words.append(Word(text=text, box=box))
        if not words:
            continue
        box = words[0].box
        for w in words[1:]:
            box = box.union(w.box)
        links = []
        for k, pair in enumerate(raw.get("linking", [])):
            if (
                not isinstance(pair, (list, tuple))
                or len(pair) != 2
                or not all(isinstance(v, int) for v in pair)
            ):
                raise ParseError(f"{path}.linking[{k}]: expected a pair of entity ids")
            links.append(tuple(pair))
        entities.append(
            Entity(id=raw["id"], words=tuple(words), box=box,
                   label=label, links=tuple(links))
        )

    return Document(
        id=doc_id if doc_id is not None else _stem(image_path),
        image_path=image_path,
        width=width,
        height=height,
        entities=tuple(entities),
    )


def serialize_document(doc: Document) -> bytes:
    """Serialize a Document back to the FUNSD-style annotation format.

    Output is byte-deterministic; parse(serialize(doc)) is structurally
    equal to doc.
    """
    form = []
    for ent in doc.entities:
        form.append({
            "id": ent.id,
            "text": " ".join(w.text for w in ent.words),
            "box": ent.box.as_list(),
            "label": ent.label,
            "words": [{"text": w.text, "box": w.box.as_list()} for w in ent.words],
            "linking": [list(pair) for pair in ent.links],
        })
    return json.dumps({"form": form}, ensure_ascii=False, indent=1).encode("utf-8")


def _stem(path: str) -> str:
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0]


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def normalize_box(box: BoundingBox, width: int, height: int) -> BoundingBox:
    """Scale a pixel box to the 0-1000 normalized space, round half-up, clamp."""
    if width <= 0 or height <= 0:
        raise ValidationError("page dimensions must be positive")
    scale = lambda v, dim: max(0, min(1000, round_half_up(v * 1000.0 / dim)))
    return BoundingBox(
        scale(box.x1, width), scale(box.y1, height),
        scale(box.x2, width), scale(box.y2, height),
    )


def dataset_stats(docs: Iterable[Document]) -> dict:
    """Counts of documents, entities and words, plus a label histogram."""
    n_docs = n_entities = n_words = 0
    labels: Counter = Counter()
    for doc in docs:
        n_docs += 1
        for ent in doc.entities:
            n_entities += 1
            n_words += len(ent.words)
            if ent.label is not None:
                labels[ent.label] += 1
    return {
        "documents": n_docs,
        "entities": n_entities,
        "words": n_words,
        "labels": dict(sorted(labels.items())),
    }


def parse_classification_sidecar(data: bytes | str) -> list[tuple[str, int]]:
    """One JSON record per line: {"image": path, "class": id in 0..15}."""
    records = []
    for lineno, line in enumerate(_lines(data), start=1):
        rec = _parse_line(line, lineno)
        if "image" not in rec or "class" not in rec:
            raise ParseError(f"line {lineno}: needs 'image' and 'class'")
        cls = rec["class"]
        if not isinstance(cls, int) or not 0 <= cls < NUM_DOC_CLASSES:
            raise ValidationError(f"line {lineno}: class id {cls!r} outside 0..15")
        records.append((rec["image"], cls))
    return records


def parse_vqa_sidecar(data: bytes | str) -> list[tuple[str, str, tuple[str, ...]]]:
    """One JSON record per line: {"image": path, "question": str, "answers": [str]}."""
    records = []
    for lineno, line in enumerate(_lines(data), start=1):
        rec = _parse_line(line, lineno)
        for key in ("image", "question", "answers"):
            if key not in rec:
                raise ParseError(f"line {lineno}: missing {key!r}")
        answers = rec["answers"]
        if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
            raise ParseError(f"line {lineno}: 'answers' must be a list of strings")
        records.append((rec["image"], rec["question"], tuple(answers)))
    return records


def serialize_classification_sidecar(records: Sequence[tuple[str, int]]) -> bytes:
    lines = [json.dumps({"image": img, "class": cls}, ensure_ascii=False)
             for img, cls in records]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def serialize_vqa_sidecar(records: Sequence[tuple[str, str, Sequence[str]]]) -> bytes:
    lines = [
        json.dumps({"image": img, "question": q, "answers": list(a)},
                   ensure_ascii=False)
        for img, q, a in records
    ]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def _lines(data: bytes | str) -> list[str]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return [line for line in data.splitlines() if line.strip()]


def _parse_line(line: str, lineno: int) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as err:
        raise ParseError(f"line {lineno}: invalid JSON: {err}") from err
    if not isinstance(rec, dict):
        raise ParseError(f"line {lineno}: record is not an object")
    return rec


def with_entities(doc: Document, entities: Sequence[Entity]) -> Document:
    return replace(doc, entities=tuple(entities))
