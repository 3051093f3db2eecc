import random

import numpy as np
import pytest

from docshift.errors import ConfigError, OracleError, PlacementError
from docshift.layout import (
    MergeParams,
    StrengthScore,
    apply_layout_merge,
    apply_layout_move,
    estimate_background,
    heuristic_strengths,
    merge_boxes,
    score_semantic_strength,
    select_move_target,
)
from docshift.model import BoundingBox, Document, Entity, Word


def closure_oracle(boxes, lambda1, lambda2):
    """Brute-force fixed point of the dilated-intersection merge relation.

    Keeps one (member-set, hull) pair per group and greedily merges the
    first pair of groups whose dilated hulls intersect, restarting the scan
    after every merge, until no pair intersects.  Merging only ever grows
    hulls, so the reachable fixed point is unique.
    """
    groups = [({i}, box) for i, box in enumerate(boxes)]
    changed = True
    while changed:
        changed = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                hull_i = groups[i][1].dilate(lambda1, lambda2)
                hull_j = groups[j][1].dilate(lambda1, lambda2)
                if hull_i.intersects(hull_j):
                    mi, bi = groups[i]
                    mj, bj = groups[j]
                    groups[i] = (mi | mj, bi.union(bj))
                    del groups[j]
                    changed = True
                    break
            if changed:
                break
    return {frozenset(m) for m, _ in groups}


def groups_of(result):
    grouped = {}
    for idx, g in result.assignment.items():
        grouped.setdefault(g, set()).add(idx)
    return {frozenset(v) for v in grouped.values()}


def random_boxes(rng, n):
    return [
        BoundingBox(x, y, x + rng.randint(0, 30), y + rng.randint(0, 30))
        for x, y in ((rng.randint(0, 100), rng.randint(0, 100)) for _ in range(n))
    ]


def test_disjoint_boxes_no_dilation_identity():
    boxes = [BoundingBox(0, 0, 10, 10), BoundingBox(30, 30, 40, 40)]
    result = merge_boxes(boxes, MergeParams(0, 0))
    assert result.merged_boxes == tuple(boxes)
    assert result.assignment == {0: 0, 1: 1}


def test_pair_merges_through_dilation():
    boxes = [BoundingBox(0, 0, 10, 10), BoundingBox(12, 0, 22, 10)]
    result = merge_boxes(boxes, MergeParams(2, 0))
    assert result.merged_boxes == (BoundingBox(0, 0, 22, 10),)
    assert groups_of(result) == closure_oracle(boxes, 2, 0)


def test_chain_merge():
    boxes = [BoundingBox(0, 0, 10, 10), BoundingBox(14, 0, 24, 10),
             BoundingBox(28, 0, 38, 10)]
    result = merge_boxes(boxes, MergeParams(3, 0))
    assert result.merged_boxes == (BoundingBox(0, 0, 38, 10),)
    assert groups_of(result) == closure_oracle(boxes, 3, 0)


def test_negative_dilation_rejected():
    with pytest.raises(ConfigError):
        MergeParams(-1, 0)


def test_empty_input():
    result = merge_boxes([], MergeParams(3, 3))
    assert result.merged_boxes == ()
    assert result.assignment == {}


def test_merge_matches_oracle_on_random_instances():
    rng = random.Random(0)
    for _ in range(200):
        boxes = random_boxes(rng, rng.randint(0, 20))
        l1, l2 = rng.choice([0, 1, 3, 8]), rng.choice([0, 1, 3, 8])
        result = merge_boxes(boxes, MergeParams(l1, l2))
        assert groups_of(result) == closure_oracle(boxes, l1, l2)
        # each merged box contains every assigned original
        for idx, g in result.assignment.items():
            assert result.merged_boxes[g].contains(boxes[idx])


def test_merge_order_independent():
    rng = random.Random(1)
    for _ in range(50):
        boxes = random_boxes(rng, 12)
        params = MergeParams(3, 1)
        base = set(map(tuple, (b.as_list() for b in merge_boxes(boxes, params).merged_boxes)))
        shuffled = boxes[:]
        rng.shuffle(shuffled)
        other = set(map(tuple, (b.as_list() for b in merge_boxes(shuffled, params).merged_boxes)))
        assert base == other


def test_merge_monotone_and_idempotent():
    rng = random.Random(2)
    for _ in range(100):
        boxes = random_boxes(rng, 15)
        counts = [
            len(merge_boxes(boxes, MergeParams(l, l)).merged_boxes)
            for l in (0, 1, 3, 8)
        ]
        assert counts == sorted(counts, reverse=True)
        merged = merge_boxes(boxes, MergeParams(3, 3)).merged_boxes
        again = merge_boxes(merged, MergeParams(3, 3)).merged_boxes
        assert again == merged


def _entity(eid, words, label="question"):
    box = words[0].box
    for w in words[1:]:
        box = box.union(w.box)
    return Entity(id=eid, words=tuple(words), box=box, label=label)


def _doc(entities, width=200, height=100):
    return Document(id="t", image_path="t.png", width=width, height=height,
                    entities=tuple(entities))


def test_apply_layout_merge_identity_when_disjoint():
    doc = _doc([
        _entity(0, [Word("a", BoundingBox(0, 0, 10, 10))]),
        _entity(1, [Word("b", BoundingBox(50, 50, 60, 60))]),
    ])
    assert apply_layout_merge(doc, MergeParams(0, 0)) == doc


def test_apply_layout_merge_single_group():
    doc = _doc([
        _entity(0, [Word("a", BoundingBox(0, 0, 10, 10)),
                    Word("b", BoundingBox(12, 0, 22, 10))]),
        _entity(1, [Word("c", BoundingBox(24, 0, 34, 10))]),
    ])
    merged = apply_layout_merge(doc, MergeParams(2, 0))
    expected = BoundingBox(0, 0, 34, 10)
    assert all(w.box == expected for w in merged.words)
    # text and labels untouched
    assert [w.text for w in merged.words] == [w.text for w in doc.words]
    assert [e.label for e in merged.entities] == [e.label for e in doc.entities]


class ConstantOracle:
    def predict(self, doc):
        return ["B-other"] * len(doc.words)


class FlipOracle:
    """Scripted stub: answers the baseline query normally, then flips every
    label on the chosen shuffle trials (all of them by default)."""

    def __init__(self, flip_trials=None):
        self.flip_trials = flip_trials  # None = flip on every shuffled input
        self.calls = 0

    def predict(self, doc):
        self.calls += 1
        if self.calls == 1:  # baseline query on the unshuffled document
            return ["B-question"] * len(doc.words)
        trial = self.calls - 1
        if self.flip_trials is None or trial in self.flip_trials:
            return ["B-answer"] * len(doc.words)
        return ["B-question"] * len(doc.words)


@pytest.fixture()
def two_entity_doc():
    return _doc([
        _entity(0, [Word("alpha", BoundingBox(0, 0, 30, 10))]),
        _entity(1, [Word("beta", BoundingBox(0, 40, 30, 50))]),
    ])


def test_strength_constant_oracle(two_entity_doc):
    scores = score_semantic_strength(two_entity_doc, ConstantOracle(), trials=30)
    assert [s.strength for s in scores] == [1.0, 1.0]


def test_strength_always_flip(two_entity_doc):
    oracle = FlipOracle()
    scores = score_semantic_strength(two_entity_doc, oracle, trials=30, rng_seed=3)
    assert [s.strength for s in scores] == [0.0, 0.0]


def test_strength_flip_on_12_of_30(two_entity_doc):
    oracle = FlipOracle(flip_trials=set(range(1, 13)))
    scores = score_semantic_strength(two_entity_doc, oracle, trials=30, rng_seed=3)
    assert [s.strength for s in scores] == [0.6, 0.6]
    assert all(s.unchanged == 18 and s.trials == 30 for s in scores)


def test_strength_deterministic(two_entity_doc):
    class RecordingOracle:
        def __init__(self):
            self.seen = []

        def predict(self, doc):
            self.seen.append(tuple(w.box for w in doc.words))
            return ["B-other"] * len(doc.words)

    a, b = RecordingOracle(), RecordingOracle()
    score_semantic_strength(two_entity_doc, a, trials=10, rng_seed=5)
    score_semantic_strength(two_entity_doc, b, trials=10, rng_seed=5)
    assert a.seen == b.seen


def test_strength_oracle_error_carries_trial(two_entity_doc):
    class Broken:
        def __init__(self):
            self.calls = 0

        def predict(self, doc):
            self.calls += 1
            if self.calls == 3:  # baseline + 2 good trials, then die
                raise RuntimeError("boom")
            return ["B-other"] * len(doc.words)

    with pytest.raises(OracleError, match="trial 1"):
        score_semantic_strength(two_entity_doc, Broken(), trials=5)


def test_heuristic_strengths():
    doc = _doc([
        _entity(0, [Word("ship", BoundingBox(0, 0, 20, 10)),
                    Word("to", BoundingBox(25, 0, 35, 10))], label="question"),
        _entity(1, [Word("77", BoundingBox(0, 20, 20, 30))], label="answer"),
        _entity(2, [Word("note", BoundingBox(0, 40, 20, 50)),
                    Word("here", BoundingBox(25, 40, 45, 50))], label="other"),
    ])
    strengths = {s.entity_id: s.strength for s in heuristic_strengths(doc)}
    assert strengths == {0: 1.0, 1: 0.0, 2: 0.0}


def test_select_move_target_disjoint(two_entity_doc):
    rng = random.Random(0)
    target = select_move_target(two_entity_doc, two_entity_doc.entities[0], rng)
    for word in two_entity_doc.words:
        assert not target.overlaps(word.box)
    assert target.width == two_entity_doc.entities[0].box.width
    assert 0 <= target.x1 and target.x2 <= two_entity_doc.width
    assert 0 <= target.y1 and target.y2 <= two_entity_doc.height


def test_select_move_target_full_page():
    doc = _doc([_entity(0, [Word("big", BoundingBox(0, 0, 200, 100))])])
    with pytest.raises(PlacementError):
        select_move_target(doc, doc.entities[0], random.Random(0))


def test_select_move_target_never_overlaps(corpus_docs):
    rng = random.Random(9)
    doc = corpus_docs[0]
    for _ in range(1000):
        ent = doc.entities[rng.randrange(len(doc.entities))]
        target = select_move_target(doc, ent, rng)
        assert all(not target.overlaps(w.box) for w in doc.words)


def test_estimate_background():
    img = np.full((20, 20, 3), 200, dtype=np.uint8)
    img[5:15, 5:15] = 0  # interior content must not affect the estimate
    assert (estimate_background(img) == 200).all()


def _image_for(doc, fill=255):
    img = np.full((doc.height, doc.width, 3), fill, dtype=np.uint8)
    return img


def test_move_count_zero_is_identity(two_entity_doc):
    img = _image_for(two_entity_doc)
    scores = [StrengthScore(0, 1, 1), StrengthScore(1, 1, 1)]
    moved, out, records = apply_layout_move(
        two_entity_doc, img, scores, count=0, rng=random.Random(0)
    )
    assert moved == two_entity_doc
    assert (out == img).all()
    assert records == []


def test_move_pixel_accounting(two_entity_doc):
    img = _image_for(two_entity_doc)
    src = two_entity_doc.entities[0].box
    img[src.y1:src.y2, src.x1:src.x2] = (10, 20, 30)
    before = img.copy()
    scores = [StrengthScore(0, 1, 1), StrengthScore(1, 1, 0)]
    moved, out, records = apply_layout_move(
        two_entity_doc, img, scores, count=1, rng=random.Random(4)
    )
    assert len(records) == 1
    rec = records[0]
    assert rec.entity_id == 0 and rec.old_box == src
    tgt = rec.new_box
    # moved pixels, vacated fill, everything else untouched
    assert (out[tgt.y1:tgt.y2, tgt.x1:tgt.x2] == before[src.y1:src.y2, src.x1:src.x2]).all()
    assert (out[src.y1:src.y2, src.x1:src.x2] == estimate_background(before)).all()
    untouched = np.ones(out.shape[:2], dtype=bool)
    untouched[src.y1:src.y2, src.x1:src.x2] = False
    untouched[tgt.y1:tgt.y2, tgt.x1:tgt.x2] = False
    assert (out[untouched] == before[untouched]).all()
    # word boxes translated by the move offset
    dx, dy = tgt.x1 - src.x1, tgt.y1 - src.y1
    for old_w, new_w in zip(two_entity_doc.entities[0].words, moved.entities[0].words):
        assert new_w.box == old_w.box.translate(dx, dy)
        assert new_w.text == old_w.text
    assert moved.entities[1] == two_entity_doc.entities[1]


def test_move_no_placement_passes_through():
    doc = _doc([_entity(0, [Word("big", BoundingBox(0, 0, 200, 100))])])
    img = _image_for(doc)
    moved, out, records = apply_layout_move(
        doc, img, [StrengthScore(0, 1, 1)], count=1, rng=random.Random(0)
    )
    assert moved == doc
    assert (out == img).all()
    assert records == []
