"""Model backends: a masked LM for fill-mask requests and a token
classifier for per-word label requests.

Inference is deterministic for fixed weights: models run in eval mode under
no_grad, and ties in top-k are broken by token id.
"""

from __future__ import annotations

import inspect
import logging
from dataclasses import dataclass

import torch
from transformers import (
    AutoModelForMaskedLM,
    AutoModelForTokenClassification,
    AutoTokenizer,
)

log = logging.getLogger("vdu_harness.backends")


@dataclass(frozen=True)
class OracleServerConfig:
    model: str
    device: str = "cpu"
    k: int = 8
    batch_size: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class MaskedLMBackend:
    """Top-k fillers for one masked word in a whitespace word sequence."""

    def __init__(self, config: OracleServerConfig):
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model)
        if self.tokenizer.mask_token is None:
            raise ValueError(f"{config.model} has no mask token")
        self.model = AutoModelForMaskedLM.from_pretrained(config.model)
        self.model.to(config.device).eval()
        log.info("masked-LM backend: %s on %s", config.model, config.device)

    @torch.no_grad()
    def fill_mask(self, words, mask_index, k):
        masked = list(words)
        masked[mask_index] = self.tokenizer.mask_token
        encoding = self.tokenizer(
            " ".join(masked), return_tensors="pt", truncation=True
        ).to(self.config.device)
        mask_positions = (
            encoding["input_ids"][0] == self.tokenizer.mask_token_id
        ).nonzero(as_tuple=True)[0]
        if len(mask_positions) == 0:
            raise ValueError("mask token fell outside the truncated window")
        logits = self.model(**encoding).logits[0, mask_positions[0]]
        probs = torch.softmax(logits, dim=-1)
        # stable ordering: descending probability, token id breaks ties
        scores, ids = torch.sort(probs, descending=True, stable=True)
        out = []
        for score, token_id in zip(scores[:k].tolist(), ids[:k].tolist()):
            token = self.tokenizer.convert_ids_to_tokens(token_id)
            out.append((token.replace("##", ""), score))
        return out


def _normalize_box(box, width, height):
    def scale(value, extent):
        return max(0, min(1000, round(1000 * value / max(extent, 1))))

    return [scale(box[0], width), scale(box[1], height),
            scale(box[2], width), scale(box[3], height)]


class PredictorBackend:
    """Per-word labels from a token-classification checkpoint.

    Subword pieces are aligned back to words; each word takes the argmax
    label of its first piece.  When the model's forward accepts a `bbox`
    tensor (layout-aware checkpoints), word boxes are normalized to the
    0-1000 grid and passed along.
    """

    def __init__(self, config: OracleServerConfig):
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model)
        self.model = AutoModelForTokenClassification.from_pretrained(config.model)
        self.model.to(config.device).eval()
        self.id2label = self.model.config.id2label
        self.wants_bbox = "bbox" in inspect.signature(self.model.forward).parameters
        log.info("predictor backend: %s on %s (bbox=%s)",
                 config.model, config.device, self.wants_bbox)

    @torch.no_grad()
    def predict(self, words, width=None, height=None):
        """words: [{"text": ..., "box": [x1, y1, x2, y2]}, ...]"""
        texts = [w["text"] for w in words]
        if not texts:
            return []
        encoding = self.tokenizer(
            texts, is_split_into_words=True, return_tensors="pt", truncation=True
        )
        kwargs = {k: v.to(self.config.device) for k, v in encoding.items()}
        if self.wants_bbox:
            page_w = width or max(w["box"][2] for w in words)
            page_h = height or max(w["box"][3] for w in words)
            word_ids = encoding.word_ids(0)
            bbox = [
                [0, 0, 0, 0] if wid is None
                else _normalize_box(words[wid]["box"], page_w, page_h)
                for wid in word_ids
            ]
            kwargs["bbox"] = torch.tensor([bbox], device=self.config.device)
        logits = self.model(**kwargs).logits[0]
        word_ids = encoding.word_ids(0)
        labels = ["O"] * len(words)
        seen = set()
        for position, wid in enumerate(word_ids):
            if wid is None or wid in seen:
                continue
            seen.add(wid)
            labels[wid] = self.id2label[int(logits[position].argmax())]
        return labels
