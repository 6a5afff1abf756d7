"""Generator operations and checkpoint handling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .. import checkpoint as ckpt_io
from ..corpus import PhonemeInventory
from ..errors import InvalidInputError
from ..features import MelSpectrogram
from .model import GeneratorConfig, GeneratorModel


@dataclass
class GeneratorCheckpoint:
    model: GeneratorModel
    config: GeneratorConfig
    inventory: PhonemeInventory
    speakers: list[str]
    step: int = 0

    def speaker_index(self, name: str) -> int:
        try:
            return self.speakers.index(name)
        except ValueError:
            raise InvalidInputError(f"unknown speaker {name!r}") from None

    def save(self, path: str | Path) -> None:
        ckpt_io.save_dir(
            path, "generator", self.model.state_dict(), self.config.to_kv(),
            self.inventory, self.step, speakers=self.speakers,
        )

    @classmethod
    def load(cls, path: str | Path,
             inventory: PhonemeInventory | None = None) -> "GeneratorCheckpoint":
        state, config_kv, embedded, step, speakers = ckpt_io.load_dir(
            path, "generator", inventory
        )
        config = GeneratorConfig.from_kv(config_kv)
        if speakers is None or len(speakers) != config.n_speakers:
            raise InvalidInputError("speaker table manifest inconsistent with config")
        model = GeneratorModel(config, len(embedded.symbols))
        model.load_state_dict(state)
        model.eval()
        return cls(model, config, embedded, speakers, step)


def init_checkpoint(config: GeneratorConfig, inventory: PhonemeInventory,
                    speakers: list[str], seed: int = 0,
                    dtype=torch.float32) -> GeneratorCheckpoint:
    if len(speakers) != config.n_speakers:
        raise InvalidInputError(
            f"{len(speakers)} speaker names for a table of {config.n_speakers}"
        )
    torch.manual_seed(seed)
    model = GeneratorModel(config, len(inventory.symbols)).to(dtype)
    model.eval()
    return GeneratorCheckpoint(model, config, inventory, list(speakers), step=0)


def _tokens_tensor(phonemes) -> torch.Tensor:
    return torch.tensor(list(phonemes), dtype=torch.long)


def _mel_tensor(mel: MelSpectrogram, model: GeneratorModel) -> torch.Tensor:
    mel.check(model.cfg.n_mels)
    return torch.from_numpy(mel.frames).to(model.dtype)


def cbhg_encode(phonemes, ckpt: GeneratorCheckpoint) -> torch.Tensor:
    """One encoded vector per phoneme."""
    ckpt.model.eval()
    with torch.no_grad():
        return ckpt.model.encode_phonemes(_tokens_tensor(phonemes))


def gst_encode(mel: MelSpectrogram, ckpt: GeneratorCheckpoint,
               return_weights: bool = False):
    """Style embedding from a (log-mel) reference; optionally the per-head
    token attention weights."""
    ckpt.model.eval()
    with torch.no_grad():
        style, weights = ckpt.model.gst(_mel_tensor(mel, ckpt.model))
    if return_weights:
        return style, weights
    return style


def state_expand(encoded: torch.Tensor, durations) -> torch.Tensor:
    """Repeat each encoded vector durations[i] times along the time axis."""
    durations = list(durations)
    if encoded.shape[0] != len(durations):
        raise InvalidInputError(
            f"{encoded.shape[0]} encoded vectors vs {len(durations)} durations"
        )
    if any(d < 1 for d in durations):
        raise InvalidInputError("all durations must be >= 1")
    reps = torch.tensor(durations, dtype=torch.long, device=encoded.device)
    return torch.repeat_interleave(encoded, reps, dim=0)


def predict_rhythm(encoded: torch.Tensor, style: torch.Tensor, speaker: int,
                   ckpt: GeneratorCheckpoint) -> torch.Tensor:
    """Real-valued per-phoneme durations (frames).

    The head works in the log domain; outputs are exponentiated here so
    they are strictly positive.
    """
    if encoded.shape[0] == 0:
        raise InvalidInputError("empty encoded sequence")
    model = ckpt.model
    model.eval()
    with torch.no_grad():
        speaker_vec = model.speaker_vector(speaker)
        log_durations = model.rhythm(encoded, style, speaker_vec)
        return torch.exp(log_durations)


def quantize_durations(real_durations) -> list[int]:
    """Round to nearest integer (half up), clamp to a minimum of 1."""
    if isinstance(real_durations, torch.Tensor):
        real_durations = real_durations.detach().cpu().numpy()
    values = np.asarray(real_durations, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("durations must be finite")
    return [max(1, int(math.floor(v + 0.5))) for v in values]


def _pad_even(x: torch.Tensor, reduction: int) -> torch.Tensor:
    remainder = x.shape[0] % reduction
    if remainder == 0:
        return x
    tail = x[-1:].expand(reduction - remainder, *x.shape[1:])
    return torch.cat([x, tail], dim=0)


def decode_mel_tensors(model: GeneratorModel, expanded: torch.Tensor,
                       style: torch.Tensor, speaker_vec: torch.Tensor,
                       teacher: torch.Tensor | None = None) -> torch.Tensor:
    """Differentiable decode; returns exactly len(expanded) frames."""
    r_sum = expanded.shape[0]
    if r_sum < 1:
        raise InvalidInputError("expanded sequence is empty")
    r = model.cfg.reduction
    if teacher is not None:
        if teacher.shape[0] != r_sum:
            raise InvalidInputError(
                f"teacher has {teacher.shape[0]} frames, expected {r_sum}"
            )
        teacher = _pad_even(teacher, r)
    out = model.decoder(_pad_even(expanded, r), style, speaker_vec, teacher)
    return out[:r_sum]


def decode_mel(expanded: torch.Tensor, style: torch.Tensor, speaker: int,
               ckpt: GeneratorCheckpoint,
               teacher: MelSpectrogram | None = None) -> MelSpectrogram:
    """Generate mel frames for an expanded encoding.

    With a teacher, frame t is predicted from teacher frames < t; without,
    the decoder consumes its own previous output (free-running).
    """
    model = ckpt.model
    model.eval()
    teacher_t = None if teacher is None else _mel_tensor(teacher, model)
    with torch.no_grad():
        speaker_vec = model.speaker_vector(speaker)
        frames = decode_mel_tensors(model, expanded, style, speaker_vec, teacher_t)
    return MelSpectrogram(
        frames.cpu().numpy().astype(np.float64),
        ckpt.config.frame_shift_ms, ckpt.config.frame_length_ms,
    )


@dataclass(frozen=True)
class GeneratorLoss:
    total: float
    recon_term: float
    rhythm_term: float


def generator_loss_tensors(
    model: GeneratorModel, mel: torch.Tensor, tokens, durations, speaker: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Reconstruction + rhythm loss, both mean-squared, teacher-forced.

    The style embedding is inferred from the target mel itself; rhythm
    targets are log durations to match the log-domain head.
    """
    durations = list(durations)
    if sum(durations) != mel.shape[0]:
        raise InvalidInputError(
            f"durations sum to {sum(durations)} but mel has {mel.shape[0]} frames"
        )
    tokens_t = _tokens_tensor(tokens)
    if tokens_t.numel() != len(durations):
        raise InvalidInputError("one duration per phoneme required")
    style, _ = model.gst(mel)
    encoded = model.encode_phonemes(tokens_t)
    speaker_vec = model.speaker_vector(speaker)

    expanded = state_expand(encoded, durations)
    predicted = decode_mel_tensors(model, expanded, style, speaker_vec, teacher=mel)
    recon = torch.mean((predicted - mel) ** 2)

    log_pred = model.rhythm(encoded, style, speaker_vec)
    target = torch.log(torch.tensor(durations, dtype=mel.dtype, device=mel.device))
    rhythm = torch.mean((log_pred - target) ** 2)
    return recon + rhythm, recon, rhythm


def generator_loss(mel: MelSpectrogram, phonemes, durations, speaker: int,
                   ckpt: GeneratorCheckpoint) -> GeneratorLoss:
    model = ckpt.model
    model.eval()
    with torch.no_grad():
        total, recon, rhythm = generator_loss_tensors(
            model, _mel_tensor(mel, model), phonemes, durations, speaker
        )
    return GeneratorLoss(float(total), float(recon), float(rhythm))
