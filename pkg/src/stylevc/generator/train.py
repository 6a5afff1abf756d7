"""Generator training and target-speaker adaptation."""

from __future__ import annotations

import dataclasses
from pathlib import Path

import torch

from ..corpus import PhonemeInventory
from ..errors import InvalidInputError
from ..features import MelSpectrogram
from ..training import BatchSampler, StepLog, TrainSchedule, apply_lr, check_finite, make_optimizer
from .model import GeneratorConfig, GeneratorModel
from .ops import GeneratorCheckpoint, generator_loss_tensors, init_checkpoint

# one example: (mel, phoneme tokens, durations, speaker index)
GeneratorExample = tuple[MelSpectrogram, tuple[int, ...], list[int], int]


def _prepare(dataset: list[GeneratorExample], model: GeneratorModel):
    prepared = []
    for mel, tokens, durations, speaker in dataset:
        if not 0 <= speaker < model.cfg.n_speakers:
            raise InvalidInputError(f"unknown speaker index {speaker}")
        if sum(durations) != mel.n_frames:
            raise InvalidInputError(
                f"durations sum {sum(durations)} != mel frames {mel.n_frames}"
            )
        prepared.append(
            (torch.from_numpy(mel.frames).to(model.dtype), tuple(tokens),
             list(durations), speaker)
        )
    return prepared


def _run_training(
    ckpt: GeneratorCheckpoint,
    dataset: list[GeneratorExample],
    schedule: TrainSchedule,
    seed: int,
    log_path: str | Path | None,
) -> GeneratorCheckpoint:
    model = ckpt.model
    prepared = _prepare(dataset, model)
    if schedule.steps == 0:
        return ckpt
    torch.manual_seed(seed + 1)
    optimizer = make_optimizer(model, schedule)
    sampler = BatchSampler(len(prepared), schedule.batch_size, seed)
    log = StepLog(["step", "total", "recon_term", "rhythm_term"])
    model.train()
    start = ckpt.step
    for step in range(1, schedule.steps + 1):
        apply_lr(optimizer, schedule.lr_at(start + step))
        batch = sampler.next_batch()
        optimizer.zero_grad()
        loss_acc = None
        total_acc = recon_acc = rhythm_acc = 0.0
        for idx in batch:
            mel_t, tokens, durations, speaker = prepared[idx]
            total, recon, rhythm = generator_loss_tensors(
                model, mel_t, tokens, durations, speaker
            )
            loss = total / len(batch)
            loss_acc = loss if loss_acc is None else loss_acc + loss
            total_acc += float(total.detach()) / len(batch)
            recon_acc += float(recon.detach()) / len(batch)
            rhythm_acc += float(rhythm.detach()) / len(batch)
        check_finite(total_acc, step)
        loss_acc.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), schedule.grad_clip)
        optimizer.step()
        log.add(start + step, total_acc, recon_acc, rhythm_acc)
    model.eval()
    if log_path is not None:
        log.write(log_path)
    return GeneratorCheckpoint(
        model, ckpt.config, ckpt.inventory, ckpt.speakers, step=start + schedule.steps
    )


def train_generator(
    dataset: list[GeneratorExample],
    config: GeneratorConfig,
    schedule: TrainSchedule,
    inventory: PhonemeInventory,
    speakers: list[str],
    seed: int = 0,
    log_path: str | Path | None = None,
) -> GeneratorCheckpoint:
    """Train from scratch on aligned (mel, phonemes, durations, speaker) data."""
    if not dataset:
        raise InvalidInputError("empty training set")
    ckpt = init_checkpoint(config, inventory, speakers, seed=seed)
    return _run_training(ckpt, dataset, schedule, seed, log_path)


def add_speaker(ckpt: GeneratorCheckpoint, name: str) -> GeneratorCheckpoint:
    """Append a speaker row initialized to the mean of the existing rows."""
    if name in ckpt.speakers:
        raise InvalidInputError(f"speaker {name!r} already in the table")
    old = ckpt.model.speaker_table.weight.data
    new_table = torch.nn.Embedding(old.shape[0] + 1, old.shape[1])
    new_table = new_table.to(old.dtype)
    with torch.no_grad():
        new_table.weight[: old.shape[0]] = old
        new_table.weight[old.shape[0]] = old.mean(dim=0)
    config = dataclasses.replace(ckpt.config, n_speakers=ckpt.config.n_speakers + 1)
    model = GeneratorModel(config, ckpt.model.n_symbols).to(ckpt.model.dtype)
    state = ckpt.model.state_dict()
    state["speaker_table.weight"] = new_table.weight.data
    model.load_state_dict(state)
    model.eval()
    return GeneratorCheckpoint(
        model, config, ckpt.inventory, ckpt.speakers + [name], step=ckpt.step
    )


def adapt_generator(
    ckpt: GeneratorCheckpoint,
    target_data: list[tuple[MelSpectrogram, tuple[int, ...], list[int]]],
    speaker: str,
    schedule: TrainSchedule,
    seed: int = 0,
    log_path: str | Path | None = None,
) -> GeneratorCheckpoint:
    """Fine-tune every parameter group on one target speaker's utterances.

    A speaker missing from the table gets a fresh row (mean-initialized)
    before fine-tuning. The input checkpoint is left untouched.
    """
    if not target_data:
        raise InvalidInputError("empty adaptation set")
    adapted = clone_checkpoint(ckpt)
    if speaker not in adapted.speakers:
        adapted = add_speaker(adapted, speaker)
    idx = adapted.speaker_index(speaker)
    dataset = [(mel, tokens, durations, idx) for mel, tokens, durations in target_data]
    return _run_training(adapted, dataset, schedule, seed, log_path)


def clone_checkpoint(ckpt: GeneratorCheckpoint) -> GeneratorCheckpoint:
    model = GeneratorModel(ckpt.config, ckpt.model.n_symbols).to(ckpt.model.dtype)
    model.load_state_dict(
        {k: v.clone() for k, v in ckpt.model.state_dict().items()}
    )
    model.eval()
    return GeneratorCheckpoint(
        model, ckpt.config, ckpt.inventory, list(ckpt.speakers), step=ckpt.step
    )
