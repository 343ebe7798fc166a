"""`drift-extract` command line."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .embed import ExtractionJob, extract_embeddings
from .finetune import FinetuneConfig, run_mlm_finetune
from .losslog import convert_loss_log


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drift-extract")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("embed", help="dump per-layer [CLS] embeddings as ECL1 files")
    e.add_argument("--model", required=True)
    e.add_argument("--texts", required=True, type=Path)
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--max-length", type=int, default=512)
    e.add_argument("--batch-size", type=int, default=16)

    l = sub.add_parser("losslog", help="convert a framework loss log to the toolkit CSV")
    l.add_argument("--log", required=True, type=Path)
    l.add_argument("--out", required=True, type=Path)
    l.add_argument("--batch-size", type=int)
    l.add_argument("--max-length", type=int)

    f = sub.add_parser("finetune", help="masked-language-model fine-tune")
    f.add_argument("--model", required=True)
    f.add_argument("--corpus", required=True, type=Path)
    f.add_argument("--out", required=True, type=Path)
    f.add_argument("--eval-file", type=Path)
    f.add_argument("--epochs", type=float, default=1.0)
    f.add_argument("--batch-size", type=int, default=16)
    f.add_argument("--max-length", type=int, default=128)
    f.add_argument("--learning-rate", type=float, default=5e-5)
    f.add_argument("--mlm-probability", type=float, default=0.15)
    f.add_argument("--logging-steps", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "embed":
            job = ExtractionJob(args.model, args.texts, args.out, args.max_length, args.batch_size)
            result = extract_embeddings(job)
        elif args.command == "losslog":
            result = {"points": convert_loss_log(args.log, args.out, args.batch_size, args.max_length)}
        else:
            config = FinetuneConfig(
                base_checkpoint=args.model,
                corpus_file=args.corpus,
                output_dir=args.out,
                eval_file=args.eval_file,
                epochs=args.epochs,
                batch_size=args.batch_size,
                max_length=args.max_length,
                learning_rate=args.learning_rate,
                mlm_probability=args.mlm_probability,
                logging_steps=args.logging_steps,
                seed=args.seed,
            )
            result = run_mlm_finetune(config)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
