"""Conversion of training-framework loss logs to the toolkit loss CSV."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any

log = logging.getLogger(__name__)

HEADER = "step,epoch,tokens_seen,train_loss,eval_loss"
TRAIN_KEYS = ("loss", "train_loss")
TOKEN_KEYS = ("num_input_tokens_seen", "tokens_seen")


def _records(path: Path) -> list[dict[str, Any]]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("{") or stripped.startswith("["):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            return [json.loads(line) for line in text.splitlines() if line.strip()]
        if isinstance(doc, dict):
            doc = doc.get("log_history", [doc])
        return list(doc)
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    return [{k.strip(): v for k, v in row.items() if v not in (None, "")} for row in rows]


def _first(record: dict[str, Any], keys: tuple[str, ...]):
    for key in keys:
        if key in record:
            return record[key]
    return None


def convert_loss_log(
    framework_log: str | Path,
    out: str | Path,
    batch_size: int | None = None,
    max_length: int | None = None,
) -> int:
    """Write the toolkit CSV and return the number of points."""
    framework_log = Path(framework_log)
    records = [r for r in _records(framework_log) if "loss" in r or "train_runtime" not in r]
    if not records:
        raise ValueError(f"{framework_log}: empty log")

    points: dict[int, dict[str, Any]] = {}
    explicit_tokens = False
    for r in records:
        if "step" not in r:
            raise ValueError(f"{framework_log}: record without step: {r}")
        step = int(float(r["step"]))
        point = points.setdefault(step, {})
        if "epoch" in r:
            point["epoch"] = float(r["epoch"])
        train = _first(r, TRAIN_KEYS)
        if train is not None:
            point["train"] = float(train)
        if "eval_loss" in r:
            point["eval"] = float(r["eval_loss"])
        tokens = _first(r, TOKEN_KEYS)
        if tokens is not None:
            point["tokens"] = int(float(tokens))
            explicit_tokens = True

    if not any("train" in p for p in points.values()):
        raise ValueError(f"{framework_log}: missing train loss column (one of {', '.join(TRAIN_KEYS)})")
    if not any("epoch" in p for p in points.values()):
        raise ValueError(f"{framework_log}: missing epoch column")

    if explicit_tokens:
        note = "# tokens_seen taken from the source log"
    else:
        if batch_size is None or max_length is None:
            raise ValueError(
                f"{framework_log}: no token counters; batch_size and max_length are needed to derive tokens_seen"
            )
        note = f"# tokens_seen = step * batch_size ({batch_size}) * max_length ({max_length})"

    lines = [note, HEADER]
    written = 0
    for step in sorted(points):
        p = points[step]
        if "train" not in p:
            log.warning("step %d has no train loss; dropped", step)
            continue
        if "epoch" not in p:
            raise ValueError(f"{framework_log}: step {step} has no epoch")
        if explicit_tokens:
            if "tokens" not in p:
                raise ValueError(f"{framework_log}: step {step} has no token count")
            tokens = p["tokens"]
        else:
            tokens = step * batch_size * max_length
        eval_loss = repr(p["eval"]) if "eval" in p else ""
        lines.append(f"{step},{p['epoch']!r},{tokens},{p['train']!r},{eval_loss}")
        written += 1
    Path(out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return written
