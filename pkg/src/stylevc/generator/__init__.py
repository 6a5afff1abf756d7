"""Rhythm- and style-conditioned speech generator."""

from .model import GeneratorConfig, GeneratorModel
from .ops import (
    GeneratorCheckpoint,
    GeneratorLoss,
    cbhg_encode,
    decode_mel,
    decode_mel_tensors,
    generator_loss,
    generator_loss_tensors,
    gst_encode,
    init_checkpoint,
    predict_rhythm,
    quantize_durations,
    state_expand,
)
from .train import add_speaker, adapt_generator, clone_checkpoint, train_generator

__all__ = [
    "GeneratorCheckpoint",
    "GeneratorConfig",
    "GeneratorLoss",
    "GeneratorModel",
    "add_speaker",
    "adapt_generator",
    "cbhg_encode",
    "clone_checkpoint",
    "decode_mel",
    "decode_mel_tensors",
    "generator_loss",
    "generator_loss_tensors",
    "gst_encode",
    "init_checkpoint",
    "predict_rhythm",
    "quantize_durations",
    "state_expand",
    "train_generator",
]
