"""Recognizer training loop."""

from __future__ import annotations

from pathlib import Path

import torch

from ..corpus import PhonemeInventory
from ..errors import InvalidInputError
from ..features import MelSpectrogram
from ..training import BatchSampler, StepLog, TrainSchedule, apply_lr, check_finite, make_optimizer
from . import ctc
from .model import RecognizerConfig
from .ops import RecognizerCheckpoint, hybrid_loss_tensors, init_checkpoint


def train_recognizer(
    dataset: list[tuple[MelSpectrogram, tuple[int, ...]]],
    config: RecognizerConfig,
    schedule: TrainSchedule,
    inventory: PhonemeInventory,
    seed: int = 0,
    log_path: str | Path | None = None,
    init: RecognizerCheckpoint | None = None,
) -> RecognizerCheckpoint:
    """Train on (normalized mel, token) pairs; returns the final checkpoint.

    All pairs must be CTC-feasible up front; a non-finite loss aborts.
    """
    if not dataset:
        raise InvalidInputError("empty training set")
    if init is None:
        ckpt = init_checkpoint(config, inventory, seed=seed)
    else:
        ckpt = init
        config = ckpt.config
    model = ckpt.model

    mels = [torch.from_numpy(mel.frames).to(model.dtype) for mel, _ in dataset]
    token_lists = [list(tokens) for _, tokens in dataset]
    factor = config.subsample_factor
    for (mel, _), tokens in zip(dataset, token_lists):
        if not tokens:
            raise InvalidInputError("utterance with empty phoneme sequence")
        enc_len = -(-mel.n_frames // factor)
        ctc.check_feasible(enc_len, tokens)

    if schedule.steps == 0:
        return ckpt

    torch.manual_seed(seed + 1)
    optimizer = make_optimizer(model, schedule)
    sampler = BatchSampler(len(dataset), schedule.batch_size, seed)
    log = StepLog(["step", "total", "ctc_term", "att_term"])
    model.train()
    start = ckpt.step
    for step in range(1, schedule.steps + 1):
        apply_lr(optimizer, schedule.lr_at(start + step))
        batch = sampler.next_batch()
        optimizer.zero_grad()
        total_acc = ctc_acc = att_acc = 0.0
        loss_acc = None
        for idx in batch:
            total, ctc_term, att_term = hybrid_loss_tensors(
                model, mels[idx], token_lists[idx], config.ctc_weight
            )
            loss = total / len(batch)
            loss_acc = loss if loss_acc is None else loss_acc + loss
            total_acc += float(total.detach()) / len(batch)
            ctc_acc += float(ctc_term.detach()) / len(batch)
            att_acc += float(att_term.detach()) / len(batch)
        check_finite(total_acc, step)
        loss_acc.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), schedule.grad_clip)
        optimizer.step()
        log.add(start + step, total_acc, ctc_acc, att_acc)
    model.eval()
    if log_path is not None:
        log.write(log_path)
    return RecognizerCheckpoint(model, config, inventory, step=start + schedule.steps)
