"""Masked-language-model fine-tuning wrapper."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import torch

LOG_FILE = "trainer_state.json"
METADATA_FILE = "finetune.json"


@dataclass
class FinetuneConfig:
    base_checkpoint: str
    corpus_file: Path
    output_dir: Path
    eval_file: Path | None = None
    epochs: float = 1.0
    batch_size: int = 16
    max_length: int = 128
    learning_rate: float = 5e-5
    mlm_probability: float = 0.15
    logging_steps: int = 10
    seed: int = 0


class _Lines(torch.utils.data.Dataset):
    def __init__(self, path: Path, tokenizer, max_length: int):
        lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if l.strip()]
        if not lines:
            raise ValueError(f"{path}: empty corpus")
        self.items = [tokenizer(l, truncation=True, max_length=max_length) for l in lines]

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, i: int):
        return self.items[i]


def run_mlm_finetune(config: FinetuneConfig) -> dict[str, Any]:
    """Fine-tune with masked tokens only and return the output paths."""
    from transformers import (
        AutoModelForMaskedLM,
        AutoTokenizer,
        DataCollatorForLanguageModeling,
        Trainer,
        TrainingArguments,
        set_seed,
    )

    corpus = Path(config.corpus_file)
    if not corpus.is_file():
        raise FileNotFoundError(f"corpus file not found: {corpus}")
    set_seed(config.seed)
    tokenizer = AutoTokenizer.from_pretrained(config.base_checkpoint)
    model = AutoModelForMaskedLM.from_pretrained(config.base_checkpoint)
    train = _Lines(corpus, tokenizer, config.max_length)
    evaluation = _Lines(config.eval_file, tokenizer, config.max_length) if config.eval_file else None

    out = Path(config.output_dir)
    args = TrainingArguments(
        output_dir=str(out / "trainer"),
        num_train_epochs=config.epochs,
        per_device_train_batch_size=config.batch_size,
        per_device_eval_batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        logging_steps=config.logging_steps,
        eval_strategy="steps" if evaluation is not None else "no",
        eval_steps=config.logging_steps if evaluation is not None else None,
        save_strategy="no",
        report_to=[],
        seed=config.seed,
        use_cpu=True,
        include_num_input_tokens_seen=True,
    )
    collator = DataCollatorForLanguageModeling(tokenizer, mlm=True, mlm_probability=config.mlm_probability)
    trainer = Trainer(
        model=model,
        args=args,
        train_dataset=train,
        eval_dataset=evaluation,
        data_collator=collator,
    )
    trainer.train()

    checkpoint = out / "checkpoint"
    trainer.save_model(str(checkpoint))
    tokenizer.save_pretrained(str(checkpoint))
    log_path = out / LOG_FILE
    trainer.state.save_to_json(str(log_path))
    metadata = {
        **{k: (str(v) if isinstance(v, Path) else v) for k, v in asdict(config).items()},
        "objective": "masked language modeling, no next-sentence prediction",
        "checkpoint": str(checkpoint),
        "loss_log": str(log_path),
    }
    (out / METADATA_FILE).write_text(json.dumps(metadata, indent=2) + "\n", encoding="utf-8")
    return metadata
