import json
import random

import pytest
import torch
from PIL import Image, ImageDraw
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import (
    BertConfig,
    BertForMaskedLM,
    BertForTokenClassification,
    PreTrainedTokenizerFast,
)

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "invoice", "receipt", "total", "amount", "date", "name", "address",
    "phone", "city", "state", "order", "number", "paid", "due", "tax",
    "the", "a", "of", "to", "and", "for", "on", "in",
]

LABELS = ["O", "B-question", "I-question", "B-answer", "I-answer",
          "B-header", "I-header", "B-other", "I-other"]


def tiny_config(**kw):
    return BertConfig(
        vocab_size=len(VOCAB), hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64,
        max_position_embeddings=128, **kw,
    )


def build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {word: i for i, word in enumerate(VOCAB)}
    core = Tokenizer(models.WordPiece(vocab=vocab, unk_token="[UNK]"))
    core.normalizer = normalizers.Lowercase()
    core.pre_tokenizer = pre_tokenizers.Whitespace()
    core.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=core,
        unk_token="[UNK]", pad_token="[PAD]", cls_token="[CLS]",
        sep_token="[SEP]", mask_token="[MASK]",
    )


@pytest.fixture(scope="session")
def tokenizer_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("tok")
    build_tokenizer().save_pretrained(root)
    return root


@pytest.fixture(scope="session")
def mlm_dir(tmp_path_factory, tokenizer_dir):
    """Tiny randomly initialized masked LM saved as a local checkpoint."""
    root = tmp_path_factory.mktemp("mlm")
    torch.manual_seed(0)
    model = BertForMaskedLM(tiny_config())
    model.save_pretrained(root)
    PreTrainedTokenizerFast.from_pretrained(tokenizer_dir).save_pretrained(root)
    return root


@pytest.fixture(scope="session")
def classifier_dir(tmp_path_factory, tokenizer_dir):
    """Tiny randomly initialized BIO token classifier."""
    root = tmp_path_factory.mktemp("cls")
    torch.manual_seed(1)
    config = tiny_config(
        num_labels=len(LABELS),
        id2label=dict(enumerate(LABELS)),
        label2id={l: i for i, l in enumerate(LABELS)},
    )
    model = BertForTokenClassification(config)
    model.save_pretrained(root)
    PreTrainedTokenizerFast.from_pretrained(tokenizer_dir).save_pretrained(root)
    return root


def write_dataset(root, n_docs=3, seed=0):
    """Small annotated dataset in the toolkit's on-disk format."""
    rng = random.Random(seed)
    (root / "annotations").mkdir(parents=True)
    (root / "images").mkdir()
    words_pool = [w for w in VOCAB if w.isalpha()]
    for i in range(n_docs):
        doc_id = f"page{i:02d}"
        form = []
        y = 10
        for ent_id in range(4):
            n = rng.randint(1, 3)
            words, x = [], 10
            for _ in range(n):
                text = rng.choice(words_pool)
                words.append({"text": text, "box": [x, y, x + 8 * len(text), y + 14]})
                x += 8 * len(text) + 6
            form.append({
                "id": ent_id,
                "label": rng.choice(["question", "answer", "header", "other"]),
                "words": words,
                "box": [words[0]["box"][0], y, words[-1]["box"][2], y + 14],
                "linking": [],
            })
            y += 24
        (root / "annotations" / f"{doc_id}.json").write_text(
            json.dumps({"form": form}, indent=1)
        )
        img = Image.new("RGB", (320, 160), (255, 255, 255))
        draw = ImageDraw.Draw(img)
        for ent in form:
            for w in ent["words"]:
                draw.text((w["box"][0], w["box"][1]), w["text"], fill=(0, 0, 0))
        img.save(root / "images" / f"{doc_id}.png")
    return root


@pytest.fixture()
def dataset_dir(tmp_path):
    return write_dataset(tmp_path / "data")
