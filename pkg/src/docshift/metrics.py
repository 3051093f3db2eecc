"""Scoring of prediction files: entity-level F1, accuracy, ANLS, and
per-label error rates.

Prediction files are JSONL, one record per document:
  IE             {"id": ..., "tags": ["B-question", "I-question", "O", ...]}
  classification {"id": ..., "class": 0-15}
  vqa            {"id": ..., "answers": [one string per question, in order]}
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import AlignmentError, ParseError, ValidationError
from .model import Document

Span = tuple[int, int, str]  # half-open word range plus label


@dataclass(frozen=True)
class PredictionSet:
    task: str
    items: dict


@dataclass(frozen=True)
class ScoreReport:
    precision: Optional[float] = None
    recall: Optional[float] = None
    f1: Optional[float] = None
    accuracy: Optional[float] = None
    anls: Optional[float] = None
    per_label_error: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {}
        for key in ("precision", "recall", "f1", "accuracy", "anls"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.per_label_error:
            out["per_label_error"] = dict(self.per_label_error)
        return out


def load_predictions(data: bytes | str, task: str) -> PredictionSet:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    items: dict = {}
    for lineno, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as err:
            raise ParseError(f"line {lineno}: invalid JSON: {err}") from err
        if not isinstance(rec, dict) or "id" not in rec:
            raise ParseError(f"line {lineno}: record needs an 'id'")
        doc_id = rec["id"]
        if doc_id in items:
            raise ValidationError(f"line {lineno}: duplicate prediction for {doc_id!r}")
        if task == "ie":
            tags = rec.get("tags")
            if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
                raise ParseError(f"line {lineno}: 'tags' must be a list of strings")
            items[doc_id] = list(tags)
        elif task == "classification":
            cls = rec.get("class")
            if not isinstance(cls, int):
                raise ParseError(f"line {lineno}: 'class' must be an integer")
            items[doc_id] = cls
        elif task == "vqa":
            answers = rec.get("answers")
            if not isinstance(answers, list) or not all(isinstance(a, str) for a in answers):
                raise ParseError(f"line {lineno}: 'answers' must be a list of strings")
            items[doc_id] = list(answers)
        else:
            raise ValidationError(f"unknown task {task!r}")
    return PredictionSet(task=task, items=items)


def serialize_predictions(preds: PredictionSet) -> bytes:
    key = {"ie": "tags", "classification": "class", "vqa": "answers"}[preds.task]
    lines = [
        json.dumps({"id": doc_id, key: payload}, ensure_ascii=False)
        for doc_id, payload in sorted(preds.items.items())
    ]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def levenshtein(a: str, b: str) -> int:
    """Edit distance, two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def anls(gold_answers: Sequence[str], prediction: str, tau: float = 0.5) -> float:
    """Max over gold answers of thresholded normalized Levenshtein similarity.

    Both sides are lowercased and whitespace-trimmed before comparison.
    """
    if not gold_answers:
        raise ValidationError("at least one gold answer required")
    pred = prediction.strip().lower()
    best = 0.0
    for answer in gold_answers:
        gold = answer.strip().lower()
        longest = max(len(gold), len(pred))
        if longest == 0:
            similarity = 1.0
        else:
            similarity = 1.0 - levenshtein(gold, pred) / longest
        if similarity >= tau:
            best = max(best, similarity)
    return best


def decode_bio(tags: Sequence[str]) -> list[Span]:
    """Lenient BIO decoding: an I-tag without a same-label predecessor opens
    a new entity.  Anything that is not B-/I- counts as outside."""
    spans: list[Span] = []
    start, label = None, None
    for i, tag in enumerate(tags):
        if tag.startswith("B-"):
            if start is not None:
                spans.append((start, i, label))
            start, label = i, tag[2:]
        elif tag.startswith("I-") and start is not None and tag[2:] == label:
            continue
        elif tag.startswith("I-"):
            if start is not None:
                spans.append((start, i, label))
            start, label = i, tag[2:]
        else:
            if start is not None:
                spans.append((start, i, label))
            start, label = None, None
    if start is not None:
        spans.append((start, len(tags), label))
    return spans


def gold_spans(doc: Document) -> list[Span]:
    return [(start, end, ent.label) for ent, start, end in doc.word_spans()]


def encode_bio(doc: Document) -> list[str]:
    """Gold BIO tags implied by a document's entities."""
    tags = []
    for ent in doc.entities:
        for i in range(len(ent.words)):
            tags.append(("B-" if i == 0 else "I-") + (ent.label or "other"))
    return tags


def _doc_spans(gold: Sequence[Document], preds: PredictionSet):
    for doc in gold:
        if doc.id not in preds.items:
            raise AlignmentError(f"no prediction for document {doc.id!r}")
        tags = preds.items[doc.id]
        n_words = len(doc.words)
        if len(tags) != n_words:
            raise AlignmentError(
                f"document {doc.id!r}: {len(tags)} tags for {n_words} words"
            )
        yield doc, gold_spans(doc), decode_bio(tags)


def entity_f1(gold: Sequence[Document], preds: PredictionSet) -> ScoreReport:
    """Micro-averaged span-exact entity F1 over the whole collection."""
    tp = n_gold = n_pred = 0
    for _, gspans, pspans in _doc_spans(gold, preds):
        gcount = Counter(gspans)
        pcount = Counter(pspans)
        tp += sum((gcount & pcount).values())
        n_gold += len(gspans)
        n_pred += len(pspans)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ScoreReport(precision=precision, recall=recall, f1=f1)


def label_error_rates(gold: Sequence[Document], preds: PredictionSet) -> dict[str, float]:
    """Per-label-group span error rates; question and answer pool as 'qa'."""
    group_of = {"other": "other", "question": "qa", "answer": "qa", "header": "header"}
    total: Counter = Counter()
    recovered: Counter = Counter()
    for _, gspans, pspans in _doc_spans(gold, preds):
        pcount = Counter(pspans)
        for span in gspans:
            group = group_of.get(span[2])
            if group is None:
                continue
            total[group] += 1
            if pcount[span] > 0:
                pcount[span] -= 1
                recovered[group] += 1
    return {g: 1.0 - recovered[g] / total[g] for g in sorted(total)}


def accuracy(gold: Sequence[Document], preds: PredictionSet) -> float:
    if not gold:
        raise ValidationError("empty gold collection")
    correct = 0
    for doc in gold:
        if doc.task_payload is None or doc.task_payload.class_id is None:
            raise ValidationError(f"document {doc.id!r} has no class label")
        if doc.id not in preds.items:
            raise AlignmentError(f"no prediction for document {doc.id!r}")
        correct += int(preds.items[doc.id] == doc.task_payload.class_id)
    return correct / len(gold)


def dataset_anls(gold: Sequence[Document], preds: PredictionSet, tau: float = 0.5) -> float:
    """Mean per-question ANLS over the collection."""
    scores = []
    for doc in gold:
        if doc.task_payload is None or not doc.task_payload.qa:
            raise ValidationError(f"document {doc.id!r} has no questions")
        if doc.id not in preds.items:
            raise AlignmentError(f"no prediction for document {doc.id!r}")
        answers = preds.items[doc.id]
        if len(answers) != len(doc.task_payload.qa):
            raise AlignmentError(
                f"document {doc.id!r}: {len(answers)} answers for "
                f"{len(doc.task_payload.qa)} questions"
            )
        for pair, pred in zip(doc.task_payload.qa, answers):
            scores.append(anls(pair.answers, pred, tau))
    if not scores:
        raise ValidationError("no questions to score")
    return sum(scores) / len(scores)


def score_dataset(
    gold: Sequence[Document], preds: PredictionSet, tau: float = 0.5
) -> ScoreReport:
    if preds.task == "ie":
        report = entity_f1(gold, preds)
        return ScoreReport(
            precision=report.precision, recall=report.recall, f1=report.f1,
            per_label_error=label_error_rates(gold, preds),
        )
    if preds.task == "classification":
        return ScoreReport(accuracy=accuracy(gold, preds))
    if preds.task == "vqa":
        return ScoreReport(anls=dataset_anls(gold, preds, tau))
    raise ValidationError(f"unknown task {preds.task!r}")
