"""Per-layer [CLS] embedding dumps from a transformer encoder."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

from . import ecl1

log = logging.getLogger(__name__)

FRAGMENT_FILE = "extraction.json"


@dataclass
class ExtractionJob:
    model_reference: str
    input_texts: Path
    output_dir: Path
    max_length: int = 512
    batch_size: int = 16


def read_texts(path: str | Path) -> list[tuple[str, str]]:
    """Read a `sample_id,text` CSV with header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sample_id", "text"]:
            raise ValueError(f"{path}: expected header sample_id,text")
        rows = []
        seen = set()
        for line, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ValueError(f"{path}:{line}: expected 2 fields, found {len(row)}")
            if row[0] in seen:
                raise ValueError(f"{path}:{line}: duplicate sample id {row[0]!r}")
            seen.add(row[0])
            rows.append((row[0], row[1]))
    if not rows:
        raise ValueError(f"{path}: no texts")
    return rows


def _load(model_reference: str):
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_reference)
    model = AutoModel.from_pretrained(model_reference)
    return model, tokenizer


def extract_embeddings(job: ExtractionJob, model=None, tokenizer=None) -> dict[str, Any]:
    """Write one ECL1 file per layer and return the manifest fragment."""
    if model is None or tokenizer is None:
        model, tokenizer = _load(job.model_reference)
    model.eval()
    texts = read_texts(job.input_texts)

    kept: list[tuple[str, str]] = []
    skipped: list[dict[str, str]] = []
    truncated: list[str] = []
    for sid, text in texts:
        try:
            full = tokenizer(text, add_special_tokens=True, truncation=False)["input_ids"]
        except Exception as exc:  # noqa: BLE001
            log.warning("skipping %s: tokenization failed: %s", sid, exc)
            skipped.append({"sample_id": sid, "reason": str(exc)})
            continue
        if len(full) > job.max_length:
            log.info("%s: %d tokens capped to %d", sid, len(full), job.max_length)
            truncated.append(sid)
        kept.append((sid, text))
    if not kept:
        raise ValueError("every sample failed tokenization")

    per_layer: list[list[np.ndarray]] | None = None
    with torch.inference_mode():
        for start in range(0, len(kept), job.batch_size):
            batch = [t for _, t in kept[start : start + job.batch_size]]
            enc = tokenizer(
                batch,
                padding=True,
                truncation=True,
                max_length=job.max_length,
                return_tensors="pt",
            )
            out = model(**enc, output_hidden_states=True)
            states = out.hidden_states
            if per_layer is None:
                per_layer = [[] for _ in states]
            for layer, h in enumerate(states):
                per_layer[layer].append(h[:, 0, :].float().cpu().numpy())

    out_dir = Path(job.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [sid for sid, _ in kept]
    assert per_layer is not None
    for layer, chunks in enumerate(per_layer):
        cloud = ecl1.Cloud(layer, job.model_reference, ids, np.concatenate(chunks, axis=0))
        ecl1.write(cloud, out_dir / ecl1.layer_file_name(layer))

    fragment = {
        "dir": str(out_dir),
        "model_tag": job.model_reference,
        "layers": len(per_layer),
        "n_samples": len(ids),
        "dim": int(per_layer[0][0].shape[1]),
        "max_length": job.max_length,
        "skipped": skipped,
        "truncated": truncated,
        "extraction_notes": (
            f"position-0 hidden state of every layer, no pooler head; eval mode (dropout off); "
            f"inputs capped at {job.max_length} tokens"
        ),
    }
    (out_dir / FRAGMENT_FILE).write_text(json.dumps(fragment, indent=2) + "\n", encoding="utf-8")
    return fragment
