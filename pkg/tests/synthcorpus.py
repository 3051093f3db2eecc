"""Synthetic FUNSD-style corpora for tests and scripts.

Pages are rendered white with dark text drawn inside each word box, so image
operations (masking, compositing, moving) have real pixels to act on.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from docshift.model import ENTITY_LABELS

WORD_POOL = [
    "invoice", "total", "amount", "date", "name", "address", "phone",
    "houses", "receipt", "balance", "payment", "order", "number", "code",
    "city", "state", "account", "reference", "subject", "department",
]
NUMBER_POOL = ["2023", "417", "88", "1050", "365"]
PUNCT_POOL = ["###", "--", "::"]

ROW_HEIGHT = 22
WORD_HEIGHT = 14
CHAR_WIDTH = 7


def build_annotation(rng: random.Random, width: int, height: int,
                     n_entities: int = 12, numbers: bool = True) -> dict:
    """Random FUNSD-style annotation dict fitting the page."""
    form = []
    y = 10
    ent_id = 0
    while ent_id < n_entities and y + WORD_HEIGHT < height - 10:
        x = 10
        n_words = rng.randint(1, 4)
        words = []
        for _ in range(n_words):
            roll = rng.random()
            if numbers and roll < 0.15:
                text = rng.choice(NUMBER_POOL)
            elif roll < 0.2:
                text = rng.choice(PUNCT_POOL)
            else:
                text = rng.choice(WORD_POOL)
            w = CHAR_WIDTH * len(text) + 4
            if x + w > width - 10:
                break
            words.append({"text": text, "box": [x, y, x + w, y + WORD_HEIGHT]})
            x += w + 8
        if not words:
            break
        box = [
            min(w["box"][0] for w in words), min(w["box"][1] for w in words),
            max(w["box"][2] for w in words), max(w["box"][3] for w in words),
        ]
        form.append({
            "id": ent_id,
            "text": " ".join(w["text"] for w in words),
            "box": box,
            "label": rng.choice(ENTITY_LABELS),
            "words": words,
            "linking": [],
        })
        ent_id += 1
        y += ROW_HEIGHT
    return {"form": form}


def render_page(annotation: dict, width: int, height: int) -> Image.Image:
    img = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    for ent in annotation["form"]:
        for word in ent["words"]:
            x1, y1, x2, y2 = word["box"]
            draw.text((x1 + 2, y1 + 2), word["text"], fill=(0, 0, 0))
    return img


def make_corpus(
    root,
    n_docs: int = 5,
    seed: int = 0,
    width: int = 480,
    height: int = 320,
    entities_per_doc: int = 10,
    task: str = "ie",
) -> Path:
    """Write a complete synthetic dataset under `root`."""
    root = Path(root)
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    sidecar_lines = []
    for i in range(n_docs):
        doc_id = f"doc{i:03d}"
        annotation = build_annotation(rng, width, height, entities_per_doc)
        (root / "annotations" / f"{doc_id}.json").write_text(
            json.dumps(annotation, ensure_ascii=False, indent=1), encoding="utf-8"
        )
        render_page(annotation, width, height).save(root / "images" / f"{doc_id}.png")
        if task == "classification":
            sidecar_lines.append(json.dumps(
                {"image": f"images/{doc_id}.png", "class": rng.randrange(16)}
            ))
        elif task == "vqa":
            sidecar_lines.append(json.dumps({
                "image": f"images/{doc_id}.png",
                "question": "what is the total?",
                "answers": [rng.choice(WORD_POOL)],
            }))
    if task == "classification":
        (root / "labels.jsonl").write_text("\n".join(sidecar_lines) + "\n")
    elif task == "vqa":
        (root / "qa.jsonl").write_text("\n".join(sidecar_lines) + "\n")
    return root


def make_natural_pool(root, n_images: int = 3, seed: int = 0, size: int = 64) -> Path:
    """Small directory of random 'natural' background images."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_images):
        pixels = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(root / f"nat{i}.png")
    return root
