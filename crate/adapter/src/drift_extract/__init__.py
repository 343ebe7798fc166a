"""Bridges transformer checkpoints to the drift toolkit file formats."""

from .ecl1 import Cloud, layer_file_name
from .embed import ExtractionJob, extract_embeddings, read_texts
from .finetune import FinetuneConfig, run_mlm_finetune
from .losslog import convert_loss_log

__all__ = [
    "Cloud",
    "ExtractionJob",
    "FinetuneConfig",
    "convert_loss_log",
    "extract_embeddings",
    "layer_file_name",
    "read_texts",
    "run_mlm_finetune",
]
