"""Phoneme recognizer with a joint CTC/attention objective."""

from .ctc import check_feasible, ctc_log_likelihood, ctc_viterbi_durations, min_frames
from .model import RecognizerConfig, RecognizerModel
from .ops import (
    HybridLoss,
    combine_hybrid,
    RecognitionResult,
    RecognizerCheckpoint,
    ctc_force_align,
    encode,
    hybrid_loss,
    hybrid_loss_tensors,
    init_checkpoint,
    recognize,
)
from .train import train_recognizer

__all__ = [
    "HybridLoss",
    "RecognitionResult",
    "RecognizerCheckpoint",
    "RecognizerConfig",
    "RecognizerModel",
    "check_feasible",
    "combine_hybrid",
    "ctc_force_align",
    "ctc_log_likelihood",
    "ctc_viterbi_durations",
    "encode",
    "hybrid_loss",
    "hybrid_loss_tensors",
    "init_checkpoint",
    "min_frames",
    "recognize",
    "train_recognizer",
]
