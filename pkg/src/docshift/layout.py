"""Layout distribution shifts: bounding-box merging and entity moving.

Merging dilates each box by (lambda1, lambda2), groups boxes whose dilated
forms intersect (transitively, so the result equals connected components of
the dilated-intersection graph and is independent of input order), and
replaces every member box by the union of the group's original boxes.

Moving relocates entities with strong textual semantics - as measured by
prediction stability under box shuffles - to an empty region of the page,
carrying both pixels and box coordinates.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, OracleError, PlacementError
from .model import BoundingBox, Document, Entity, Word, with_entities

MOVE_GRID_STRIDE = 8


@dataclass(frozen=True)
class MergeParams:
    lambda1: int  # horizontal dilation, pixels
    lambda2: int  # vertical dilation, pixels

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError(
                f"dilation distances must be non-negative, got "
                f"({self.lambda1}, {self.lambda2})"
            )


@dataclass(frozen=True)
class MergeResult:
    merged_boxes: tuple[BoundingBox, ...]
    assignment: dict[int, int]  # original box index -> merged box index


@dataclass(frozen=True)
class StrengthScore:
    entity_id: int
    trials: int
    unchanged: int

    def __post_init__(self):
        if not 0 <= self.unchanged <= self.trials:
            raise ConfigError("unchanged count outside [0, trials]")

    @property
    def strength(self) -> float:
        return self.unchanged / self.trials


@dataclass(frozen=True)
class MoveRecord:
    entity_id: int
    old_box: BoundingBox
    new_box: BoundingBox


def _components_pass(extents: Sequence[BoundingBox], params: MergeParams) -> list[list[int]]:
    """One union-find pass: groups whose dilated extents intersect."""
    n = len(extents)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    dilated = [b.dilate(params.lambda1, params.lambda2) for b in extents]
    for i in range(n):
        for j in range(i):
            if dilated[i].intersects(dilated[j]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups: dict[int, list[int]] = {}
    order: list[int] = []
    for i in range(n):
        root = find(i)
        if root not in groups:
            groups[root] = []
            order.append(root)
        groups[root].append(i)
    return [groups[root] for root in order]


def merge_boxes(boxes: Sequence[BoundingBox], params: MergeParams) -> MergeResult:
    """Group boxes whose dilated forms intersect, transitively and to a
    fixed point: the traversed set holds merged boxes, so a growing merged
    box keeps absorbing whatever its dilated form reaches.  The result is
    order-independent and re-merging it is the identity.  Merged extents
    are unions of original member boxes.
    """
    members: list[list[int]] = [[i] for i in range(len(boxes))]
    extents: list[BoundingBox] = list(boxes)
    while True:
        grouping = _components_pass(extents, params)
        if len(grouping) == len(extents):
            break
        members = [
            [m for g in group for m in members[g]] for group in grouping
        ]
        new_extents = []
        for group in grouping:
            box = extents[group[0]]
            for g in group[1:]:
                box = box.union(extents[g])
            new_extents.append(box)
        extents = new_extents
    assignment = {m: g for g, group in enumerate(members) for m in group}
    return MergeResult(merged_boxes=tuple(extents), assignment=assignment)


def apply_layout_merge(doc: Document, params: MergeParams) -> Document:
    """Replace every word box by its merged-group box; text and labels stay."""
    words = doc.words
    result = merge_boxes([w.box for w in words], params)
    entities, pos = [], 0
    for ent in doc.entities:
        new_words = []
        for w in ent.words:
            new_words.append(Word(text=w.text, box=result.merged_boxes[result.assignment[pos]]))
            pos += 1
        box = new_words[0].box
        for w in new_words[1:]:
            box = box.union(w.box)
        entities.append(replace(ent, words=tuple(new_words), box=box))
    return with_entities(doc, entities)


def _predict(predictor, doc: Document) -> list[str]:
    fn = getattr(predictor, "predict", predictor)
    labels = list(fn(doc))
    if len(labels) != len(doc.words):
        raise OracleError(
            f"predictor returned {len(labels)} labels for {len(doc.words)} words"
        )
    return labels


def shuffle_entity_boxes(doc: Document, rng: random.Random) -> Document:
    """Permute entity boxes uniformly; each entity's words follow its box."""
    n = len(doc.entities)
    perm = list(range(n))
    rng.shuffle(perm)
    entities = []
    for ent, j in zip(doc.entities, perm):
        target = doc.entities[j].box
        dx, dy = target.x1 - ent.box.x1, target.y1 - ent.box.y1
        new_words = tuple(
            Word(text=w.text, box=w.box.translate(dx, dy).clamp(doc.width, doc.height))
            for w in ent.words
        )
        box = new_words[0].box
        for w in new_words[1:]:
            box = box.union(w.box)
        entities.append(replace(ent, words=new_words, box=box))
    return with_entities(doc, entities)


def score_semantic_strength(
    doc: Document,
    predictor,
    trials: int = 30,
    rng_seed: int = 0,
) -> list[StrengthScore]:
    """Stability of per-word predictions under random box permutations.

    An entity counts as unchanged in a trial when every one of its word
    labels equals the prediction on the unshuffled document.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    baseline = _predict(predictor, doc)
    spans = doc.word_spans()
    unchanged = [0] * len(spans)
    rng = random.Random(rng_seed)
    for trial in range(trials):
        shuffled = shuffle_entity_boxes(doc, rng)
        try:
            labels = _predict(predictor, shuffled)
        except OracleError:
            raise
        except Exception as err:
            raise OracleError(f"predictor failed on trial {trial}: {err}") from err
        for i, (_, start, end) in enumerate(spans):
            if labels[start:end] == baseline[start:end]:
                unchanged[i] += 1
    return [
        StrengthScore(entity_id=ent.id, trials=trials, unchanged=unchanged[i])
        for i, (ent, _, _) in enumerate(spans)
    ]


def heuristic_strengths(doc: Document) -> list[StrengthScore]:
    """Oracle-free proxy: question/answer entities with >= 2 alphabetic words
    count as strong.  An approximation for stand-alone pipeline runs."""
    scores = []
    for ent in doc.entities:
        alpha_words = sum(1 for w in ent.words if any(c.isalpha() for c in w.text))
        strong = ent.label in ("question", "answer") and alpha_words >= 2
        scores.append(StrengthScore(entity_id=ent.id, trials=1, unchanged=int(strong)))
    return scores


def _free_positions(
    word_boxes: Sequence[BoundingBox],
    page_w: int,
    page_h: int,
    box_w: int,
    box_h: int,
    stride: int = MOVE_GRID_STRIDE,
) -> list[tuple[int, int]]:
    """Grid-aligned top-left corners where a box_w x box_h box overlaps no word."""
    if box_w > page_w or box_h > page_h:
        return []
    occupied = np.zeros((page_h, page_w), dtype=np.int32)
    for b in word_boxes:
        c = b.clamp(page_w, page_h)
        occupied[c.y1:c.y2, c.x1:c.x2] = 1
    # summed-area table with a zero border for O(1) region queries
    integral = np.zeros((page_h + 1, page_w + 1), dtype=np.int64)
    integral[1:, 1:] = occupied.cumsum(0).cumsum(1)
    xs = np.arange(0, page_w - box_w + 1, stride)
    ys = np.arange(0, page_h - box_h + 1, stride)
    if len(xs) == 0 or len(ys) == 0:
        return []
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    sums = (
        integral[gy + box_h, gx + box_w]
        - integral[gy, gx + box_w]
        - integral[gy + box_h, gx]
        + integral[gy, gx]
    )
    free = sums == 0
    return [(int(x), int(y)) for y, x in zip(gy[free], gx[free])]


def select_move_target(doc: Document, entity: Entity, rng: random.Random) -> BoundingBox:
    """Uniformly pick an empty, grid-aligned, on-page spot of the entity's size."""
    positions = _free_positions(
        [w.box for w in doc.words], doc.width, doc.height,
        entity.box.width, entity.box.height,
    )
    if not positions:
        raise PlacementError(
            f"no free placement for entity {entity.id} "
            f"({entity.box.width}x{entity.box.height}) on page {doc.id}"
        )
    x, y = positions[rng.randrange(len(positions))]
    return BoundingBox(x, y, x + entity.box.width, y + entity.box.height)


def estimate_background(image: np.ndarray) -> np.ndarray:
    """Median color of the 1-pixel page border, per channel."""
    border = np.concatenate([
        image[0, :].reshape(-1, image.shape[2]),
        image[-1, :].reshape(-1, image.shape[2]),
        image[:, 0].reshape(-1, image.shape[2]),
        image[:, -1].reshape(-1, image.shape[2]),
    ])
    return np.median(border, axis=0).astype(image.dtype)


def apply_layout_move(
    doc: Document,
    image: np.ndarray,
    strengths: Sequence[StrengthScore],
    strength_threshold: float = 1.0,
    count: int = 1,
    rng: Optional[random.Random] = None,
) -> tuple[Document, np.ndarray, list[MoveRecord]]:
    """Move up to `count` strong entities to empty page regions.

    Pixels under each moved entity box are copied to the target and the
    vacated region is filled with the estimated page background; word boxes
    are translated by the move offset.  Returns the new document, the new
    image, and one record per moved entity (empty if nothing could move).
    """
    if rng is None:
        rng = random.Random(0)
    by_id = {s.entity_id: s for s in strengths}
    out = image.copy()
    background = estimate_background(image)
    entities = list(doc.entities)
    records: list[MoveRecord] = []
    for idx, ent in enumerate(entities):
        if len(records) >= count or count <= 0:
            break
        score = by_id.get(ent.id)
        if score is None or score.strength < strength_threshold:
            continue
        current = with_entities(doc, entities)
        try:
            target = select_move_target(current, ent, rng)
        except PlacementError:
            continue
        src = ent.box.clamp(doc.width, doc.height)
        dx, dy = target.x1 - ent.box.x1, target.y1 - ent.box.y1
        patch = out[src.y1:src.y2, src.x1:src.x2].copy()
        out[src.y1:src.y2, src.x1:src.x2] = background
        out[src.y1 + dy:src.y2 + dy, src.x1 + dx:src.x2 + dx] = patch
        new_words = tuple(
            Word(text=w.text, box=w.box.translate(dx, dy).clamp(doc.width, doc.height))
            for w in ent.words
        )
        box = new_words[0].box
        for w in new_words[1:]:
            box = box.union(w.box)
        entities[idx] = replace(ent, words=new_words, box=box)
        records.append(MoveRecord(entity_id=ent.id, old_box=ent.box, new_box=target))
    return with_entities(doc, entities), out, records
