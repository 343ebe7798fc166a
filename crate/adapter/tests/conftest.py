import os
import random
import shutil
from pathlib import Path

import pytest

WORDS = (
    "the a bank loan rate market patient tissue cell sample report court ruling law "
    "game team score season weather rain wind city road car price stock fund"
).split()
SPECIAL = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
REPO = Path(__file__).resolve().parents[2]


def sentences(n, seed=0, length=(4, 12)):
    rng = random.Random(seed)
    return [" ".join(rng.choice(WORDS) for _ in range(rng.randint(*length))) for _ in range(n)]


def save_tiny_encoder(path, layers, seed=0):
    import torch
    from transformers import BertConfig, BertForMaskedLM, BertTokenizer

    torch.manual_seed(seed)
    vocab = {w: i for i, w in enumerate(SPECIAL + WORDS)}
    tokenizer = BertTokenizer(vocab=vocab)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=16,
        num_hidden_layers=layers,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
    )
    BertForMaskedLM(config).save_pretrained(path)
    tokenizer.save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def encoder12(tmp_path_factory):
    return save_tiny_encoder(tmp_path_factory.mktemp("enc12"), layers=12)


@pytest.fixture(scope="session")
def encoder12_other(tmp_path_factory):
    return save_tiny_encoder(tmp_path_factory.mktemp("enc12b"), layers=12, seed=1)


@pytest.fixture(scope="session")
def encoder4(tmp_path_factory):
    return save_tiny_encoder(tmp_path_factory.mktemp("enc4"), layers=4)


@pytest.fixture
def drift_bin():
    """The toolkit binary, if it has been built."""
    candidates = [os.environ.get("DRIFT_BIN"), shutil.which("drift")]
    candidates += [str(REPO / "target" / p / "drift") for p in ("debug", "release")]
    for c in candidates:
        if c and Path(c).is_file():
            return c
    pytest.skip("drift binary not built")


def write_texts(path, rows):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "text"])
        w.writerows(rows)
    return path
