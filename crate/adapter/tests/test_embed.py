import json
import subprocess

import numpy as np
import pytest

from conftest import sentences, write_texts
from drift_extract import ExtractionJob, extract_embeddings, layer_file_name
from drift_extract import ecl1


def run(model, texts, out, **kw):
    return extract_embeddings(ExtractionJob(model, texts, out, **kw))


def test_shape_contract(tmp_path, encoder12):
    texts = write_texts(tmp_path / "t.csv", [("x2", "the bank"), ("x0", "rain wind"), ("x1", "a court ruling")])
    fragment = run(encoder12, texts, tmp_path / "out", batch_size=2)
    assert fragment["layers"] == 13 and fragment["n_samples"] == 3
    for layer in range(13):
        cloud = ecl1.read(tmp_path / "out" / layer_file_name(layer))
        assert cloud.layer_index == layer
        assert cloud.vectors.shape == (3, 16)
        assert cloud.sample_ids == ["x2", "x0", "x1"]
    assert "no pooler" in fragment["extraction_notes"]


def test_four_layer_encoder_dumps_five_layers(tmp_path, encoder4):
    texts = write_texts(tmp_path / "t.csv", [("a", "the bank"), ("b", "a loan")])
    fragment = run(encoder4, texts, tmp_path / "out")
    assert fragment["layers"] == 5
    assert sorted(p.name for p in (tmp_path / "out").glob("*.ecl1")) == [layer_file_name(l) for l in range(5)]


def test_layer_zero_is_embedding_output(tmp_path, encoder12):
    import torch
    from transformers import AutoModel, AutoTokenizer

    texts = write_texts(tmp_path / "t.csv", [("a", "stock price")])
    run(encoder12, texts, tmp_path / "out")
    model = AutoModel.from_pretrained(encoder12).eval()
    enc = AutoTokenizer.from_pretrained(encoder12)(["stock price"], return_tensors="pt")
    with torch.no_grad():
        emb = model.embeddings(input_ids=enc["input_ids"], token_type_ids=enc["token_type_ids"])
        last = model(**enc).last_hidden_state
    assert np.allclose(ecl1.read(tmp_path / "out" / "layer_00.ecl1").vectors[0], emb[0, 0].numpy(), atol=1e-6)
    assert np.allclose(ecl1.read(tmp_path / "out" / "layer_12.ecl1").vectors[0], last[0, 0].numpy(), atol=1e-5)


def test_deterministic(tmp_path, encoder12):
    rows = [(f"s{i}", t) for i, t in enumerate(sentences(10))]
    texts = write_texts(tmp_path / "t.csv", rows)
    run(encoder12, texts, tmp_path / "a", batch_size=4)
    run(encoder12, texts, tmp_path / "b", batch_size=4)
    for layer in range(13):
        name = layer_file_name(layer)
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_long_text_is_capped_and_flagged(tmp_path, encoder12):
    long = " ".join(["market"] * 100)
    texts = write_texts(tmp_path / "t.csv", [("long", long), ("short", "the city")])
    fragment = run(encoder12, texts, tmp_path / "out", max_length=16)
    assert fragment["truncated"] == ["long"]
    capped = write_texts(tmp_path / "c.csv", [("long", " ".join(["market"] * 14))])
    run(encoder12, capped, tmp_path / "cap", max_length=16)
    a = ecl1.read(tmp_path / "out" / "layer_12.ecl1").vectors[0]
    b = ecl1.read(tmp_path / "cap" / "layer_12.ecl1").vectors[0]
    assert np.allclose(a, b, atol=1e-5)


def test_tokenization_failure_is_skipped_and_logged(tmp_path, encoder12, caplog):
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(encoder12)
    real = tokenizer.__class__.__call__

    class Picky(tokenizer.__class__):
        def __call__(self, text, *a, **kw):
            if isinstance(text, str) and "forbidden" in text:
                raise ValueError("cannot tokenize")
            return real(self, text, *a, **kw)

    tokenizer.__class__ = Picky
    texts = write_texts(tmp_path / "t.csv", [("a", "the bank"), ("b", "forbidden"), ("c", "rain")])
    job = ExtractionJob(encoder12, texts, tmp_path / "out")
    fragment = extract_embeddings(job, AutoModel.from_pretrained(encoder12), tokenizer)
    assert fragment["skipped"] == [{"sample_id": "b", "reason": "cannot tokenize"}]
    assert ecl1.read(tmp_path / "out" / "layer_05.ecl1").sample_ids == ["a", "c"]
    assert "skipping b" in caplog.text
    assert json.loads((tmp_path / "out" / "extraction.json").read_text())["skipped"][0]["sample_id"] == "b"


def test_bad_text_file(tmp_path, encoder12):
    bad = tmp_path / "t.csv"
    bad.write_text("id,body\na,b\n")
    with pytest.raises(ValueError, match="sample_id,text"):
        run(encoder12, bad, tmp_path / "out")
    dup = write_texts(tmp_path / "d.csv", [("a", "x"), ("a", "y")])
    with pytest.raises(ValueError, match="duplicate"):
        run(encoder12, dup, tmp_path / "out")


def test_dumps_pass_toolkit_validation(tmp_path, encoder12, encoder12_other, drift_bin):
    rows = [(f"s{i}", t) for i, t in enumerate(sentences(30, seed=3))]
    texts = write_texts(tmp_path / "t.csv", rows)
    run(encoder12, texts, tmp_path / "base")
    run(encoder12_other, texts, tmp_path / "ft")
    manifest = {"domain_name": "toy", "base_dir": "base", "ft_dir": "ft"}
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    profile = tmp_path / "cka.csv"
    subprocess.run(
        [drift_bin, "similarity", "--run", str(tmp_path / "manifest.json"), "--metric", "cka", "--out", str(profile)],
        check=True,
    )
    lines = profile.read_text().splitlines()
    assert lines[0] == "layer,score,change" and len(lines) == 14
