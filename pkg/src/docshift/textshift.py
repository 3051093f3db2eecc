"""Text distribution shifts simulating OCR errors.

Five modes: embedding-neighbor swap, homoglyph substitution, digit
replacement, random character deletion, and a masked-LM attack driven by an
external oracle.  All modes touch only word text; boxes, labels and pixels
are never modified, and word count is preserved.

Selection is a per-word independent Bernoulli(rate) draw from a seeded RNG,
over whitespace-delimited annotation words; punctuation-only tokens are
never eligible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, OracleError
from .model import Document, Word, with_entities

SWAP_MODES = ("embedding", "homoglyph", "number", "char_delete", "bert_attack")
DIGITS = "0123456789"


@dataclass(frozen=True)
class SwapConfig:
    mode: str
    rate: float = 0.15
    k: int = 8
    seed: int = 0
    timeout: float = 30.0

    def __post_init__(self):
        if self.mode not in SWAP_MODES:
            raise ConfigError(f"unknown swap mode {self.mode!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"rate must be in [0, 1], got {self.rate}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")


class EmbeddingTable:
    """Word vectors loaded from the textual "word v1 v2 ... vd" format."""

    def __init__(self, words: Sequence[str], vectors: np.ndarray):
        if len(words) != len(vectors):
            raise ConfigError("one vector per word required")
        if len(words) and vectors.ndim != 2:
            raise ConfigError("vectors must form a 2-D matrix")
        norms = np.linalg.norm(vectors, axis=1) if len(words) else np.array([])
        if len(words) and (norms == 0).any():
            bad = words[int(np.argmax(norms == 0))]
            raise ConfigError(f"zero-norm vector for word {bad!r}")
        self.words = list(words)
        self.index = {w: i for i, w in enumerate(self.words)}
        self.unit = vectors / norms[:, None] if len(words) else vectors

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        words, rows = [], []
        dim = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) < 2:
                    raise ConfigError(f"{path}:{lineno}: missing vector components")
                try:
                    vec = [float(v) for v in parts[1:]]
                except ValueError as err:
                    raise ConfigError(f"{path}:{lineno}: {err}") from err
                if dim is None:
                    dim = len(vec)
                elif len(vec) != dim:
                    raise ConfigError(
                        f"{path}:{lineno}: dimension {len(vec)} != {dim}"
                    )
                words.append(parts[0])
                rows.append(vec)
        return cls(words, np.asarray(rows, dtype=np.float64))

    def neighbors(self, word: str, k: int) -> list[str]:
        """The k nearest cosine-similarity neighbors, excluding the word itself.

        Ties break by vocabulary order so results are deterministic.
        """
        i = self.index[word]
        sims = self.unit @ self.unit[i]
        order = np.lexsort((np.arange(len(sims)), -sims))
        return [self.words[j] for j in order if j != i][:k]


def load_homoglyph_table(path=None) -> dict[str, str]:
    if path is None:
        text = resources.files("docshift").joinpath("data/homoglyphs.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    table: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or len(parts[0]) != 1 or len(parts[1]) != 1:
            raise ConfigError(f"homoglyph table line {lineno}: expected two single characters")
        table[parts[0]] = parts[1]
    return table


@dataclass(frozen=True)
class TextChange:
    word_index: int
    before: str
    after: str


@dataclass(frozen=True)
class TextShiftResult:
    document: Document
    changes: tuple[TextChange, ...]
    # word indices selected for bert_attack where every candidate equaled
    # the original, left unchanged
    flagged: tuple[int, ...] = ()


def _base_eligible(text: str) -> bool:
    return any(ch.isalnum() for ch in text)


def _rebuild(doc: Document, texts: list[str]) -> Document:
    entities, pos = [], 0
    for ent in doc.entities:
        words = []
        for w in ent.words:
            words.append(Word(text=texts[pos], box=w.box))
            pos += 1
        entities.append(replace(ent, words=tuple(words)))
    return with_entities(doc, entities)


def delete_one_char(word: str, index: int) -> str:
    return word[:index] + word[index + 1:]


def _run_swap(
    doc: Document,
    cfg: SwapConfig,
    eligible,
    perturb,
) -> TextShiftResult:
    """Shared selection loop: Bernoulli(rate) over eligible words, in order."""
    rng = random.Random(cfg.seed)
    words = doc.words
    texts = [w.text for w in words]
    changes = []
    for i, w in enumerate(words):
        if not _base_eligible(w.text) or not eligible(w.text):
            continue
        if rng.random() >= cfg.rate:
            continue
        new = perturb(w.text, rng)
        if new != w.text:
            changes.append(TextChange(word_index=i, before=w.text, after=new))
            texts[i] = new
    return TextShiftResult(document=_rebuild(doc, texts), changes=tuple(changes))


def swap_by_embedding(doc: Document, table: EmbeddingTable, cfg: SwapConfig) -> Document:
    return swap_by_embedding_detailed(doc, table, cfg).document


def swap_by_embedding_detailed(
    doc: Document, table: EmbeddingTable, cfg: SwapConfig
) -> TextShiftResult:
    if len(table) == 0:
        raise ConfigError("embedding table is empty")

    def perturb(text: str, rng: random.Random) -> str:
        nbrs = table.neighbors(text.lower(), cfg.k)
        return rng.choice(nbrs) if nbrs else text

    return _run_swap(doc, cfg, lambda t: t.lower() in table, perturb)


def swap_homoglyph(
    doc: Document, cfg: SwapConfig, table: Optional[dict[str, str]] = None
) -> Document:
    return swap_homoglyph_detailed(doc, cfg, table).document


def swap_homoglyph_detailed(
    doc: Document, cfg: SwapConfig, table: Optional[dict[str, str]] = None
) -> TextShiftResult:
    glyphs = table if table is not None else load_homoglyph_table()

    def perturb(text: str, rng: random.Random) -> str:
        return "".join(glyphs.get(ch, ch) for ch in text)

    return _run_swap(doc, cfg, lambda t: any(ch in glyphs for ch in t), perturb)


def swap_numbers(doc: Document, cfg: SwapConfig) -> Document:
    return swap_numbers_detailed(doc, cfg).document


def swap_numbers_detailed(doc: Document, cfg: SwapConfig) -> TextShiftResult:
    def perturb(text: str, rng: random.Random) -> str:
        return "".join(
            rng.choice(DIGITS.replace(ch, "")) if ch.isdigit() else ch
            for ch in text
        )

    return _run_swap(doc, cfg, lambda t: any(ch.isdigit() for ch in t), perturb)


def delete_characters(doc: Document, cfg: SwapConfig) -> Document:
    return delete_characters_detailed(doc, cfg).document


def delete_characters_detailed(doc: Document, cfg: SwapConfig) -> TextShiftResult:
    def perturb(text: str, rng: random.Random) -> str:
        return delete_one_char(text, rng.randrange(len(text)))

    return _run_swap(doc, cfg, lambda t: len(t) >= 2, perturb)


def bert_attack(doc: Document, lm, cfg: SwapConfig) -> Document:
    return bert_attack_detailed(doc, lm, cfg).document


def bert_attack_detailed(doc: Document, lm, cfg: SwapConfig) -> TextShiftResult:
    """Mask each selected word, ask the LM oracle for fillers, take the
    highest-scored candidate that differs case-insensitively."""
    rng = random.Random(cfg.seed)
    words = doc.words
    texts = [w.text for w in words]
    changes, flagged = [], []
    fill = getattr(lm, "fill_mask", lm)
    for i, w in enumerate(words):
        if not _base_eligible(w.text):
            continue
        if rng.random() >= cfg.rate:
            continue
        try:
            candidates = fill([x.text for x in words], i, cfg.k)
        except OracleError:
            raise
        except Exception as err:
            raise OracleError(f"masked-LM oracle failed at word {i}: {err}") from err
        best = None
        for token, score in sorted(candidates, key=lambda c: -c[1]):
            if token.lower() != w.text.lower():
                best = token
                break
        if best is None:
            flagged.append(i)
        else:
            changes.append(TextChange(word_index=i, before=w.text, after=best))
            texts[i] = best
    return TextShiftResult(
        document=_rebuild(doc, texts),
        changes=tuple(changes),
        flagged=tuple(flagged),
    )
