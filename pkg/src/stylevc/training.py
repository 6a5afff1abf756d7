"""Shared training plumbing: schedules, per-step CSV logs, divergence checks."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path

import torch

from . import kvdoc
from .errors import TrainingDivergedError


@dataclass(frozen=True)
class TrainSchedule:
    steps: int
    batch_size: int = 4
    learning_rate: float = 1e-3
    warmup_steps: int = 100
    grad_clip: float = 5.0

    def lr_at(self, step: int) -> float:
        """Linear warmup to learning_rate, then inverse-sqrt decay."""
        if step < 1:
            step = 1
        warm = max(1, self.warmup_steps)
        return self.learning_rate * min(step / warm, math.sqrt(warm / step))

    def to_kv(self) -> dict:
        return kvdoc.dataclass_to_kv(self)

    @classmethod
    def from_kv(cls, pairs: dict[str, str]) -> "TrainSchedule":
        return kvdoc.dataclass_from_kv(cls, pairs)


class StepLog:
    """Per-step loss log with a stable text format (bit-reproducible runs)."""

    def __init__(self, columns: list[str]):
        self.columns = columns
        self.rows: list[tuple] = []

    def add(self, *values) -> None:
        self.rows.append(tuple(values))

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(",".join(self.columns) + "\n")
            for row in self.rows:
                f.write(",".join(_format_cell(v) for v in row) + "\n")


def _format_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def check_finite(value: float, step: int) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(f"non-finite loss at step {step}")


class BatchSampler:
    """Deterministic epoch-shuffled index batches."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = random.Random(seed)
        self._order: list[int] = []
        self._pos = 0

    def next_batch(self) -> list[int]:
        batch = []
        while len(batch) < self.batch_size:
            if self._pos >= len(self._order):
                self._order = list(range(self.n))
                self.rng.shuffle(self._order)
                self._pos = 0
            batch.append(self._order[self._pos])
            self._pos += 1
        return batch


def make_optimizer(model: torch.nn.Module, schedule: TrainSchedule) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=schedule.learning_rate,
                            betas=(0.9, 0.98), eps=1e-9)


def apply_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
