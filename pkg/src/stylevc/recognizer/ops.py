"""Recognizer operations: encoding, joint loss, decoding, forced alignment."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from .. import checkpoint as ckpt_io
from ..corpus import PhonemeInventory
from ..errors import InvalidInputError
from ..features import MelSpectrogram
from . import ctc
from .model import RecognizerConfig, RecognizerModel


@dataclass
class RecognizerCheckpoint:
    model: RecognizerModel
    config: RecognizerConfig
    inventory: PhonemeInventory
    step: int = 0

    def save(self, path: str | Path) -> None:
        ckpt_io.save_dir(
            path, "recognizer", self.model.state_dict(), self.config.to_kv(),
            self.inventory, self.step,
        )

    @classmethod
    def load(cls, path: str | Path,
             inventory: PhonemeInventory | None = None) -> "RecognizerCheckpoint":
        state, config_kv, embedded, step, _ = ckpt_io.load_dir(path, "recognizer", inventory)
        config = RecognizerConfig.from_kv(config_kv)
        model = build_model(config, embedded)
        model.load_state_dict(state)
        model.eval()
        return cls(model, config, embedded, step)


def build_model(config: RecognizerConfig, inventory: PhonemeInventory,
                dtype=torch.float32) -> RecognizerModel:
    model = RecognizerModel(
        config, inventory.size,
        inventory.blank_id, inventory.sos_id, inventory.eos_id, inventory.pad_id,
    )
    return model.to(dtype)


def init_checkpoint(config: RecognizerConfig, inventory: PhonemeInventory,
                    seed: int = 0, dtype=torch.float32) -> RecognizerCheckpoint:
    torch.manual_seed(seed)
    model = build_model(config, inventory, dtype)
    model.eval()
    return RecognizerCheckpoint(model, config, inventory, step=0)


def _mel_tensor(mel: MelSpectrogram, model: RecognizerModel) -> torch.Tensor:
    mel.check()
    return torch.from_numpy(mel.frames).to(model.dtype)


def encode(mel: MelSpectrogram, ckpt: RecognizerCheckpoint) -> torch.Tensor:
    """Hidden-state sequence, length ceil(T / subsample_factor)."""
    ckpt.model.eval()
    with torch.no_grad():
        return ckpt.model.encode(_mel_tensor(mel, ckpt.model))


@dataclass(frozen=True)
class HybridLoss:
    total: float
    ctc_term: float
    att_term: float


def combine_hybrid(ctc_term, att_term, ctc_weight: float):
    """Weighted joint objective; loss rises with either term for any
    interior weight."""
    return ctc_weight * ctc_term + (1.0 - ctc_weight) * att_term


def hybrid_loss_tensors(
    model: RecognizerModel, mel: torch.Tensor, tokens, ctc_weight: float
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Differentiable joint loss: weight * ctc_nll + (1 - weight) * att_nll.

    Both terms are per-utterance negative log-likelihood sums.
    """
    tokens = list(tokens)
    if not tokens:
        raise InvalidInputError("empty phoneme sequence")
    encoded = model.encode(mel)
    ctc.check_feasible(encoded.shape[0], tokens)
    log_probs = model.ctc_log_probs(encoded)
    ctc_term = -ctc.ctc_log_likelihood(log_probs, tokens, model.blank_id)

    device = mel.device
    tokens_in = torch.tensor([model.sos_id] + tokens, dtype=torch.long, device=device)
    targets = torch.tensor(tokens + [model.eos_id], dtype=torch.long, device=device)
    logits = model.decoder_logits(encoded, tokens_in)
    att_term = torch.nn.functional.cross_entropy(logits, targets, reduction="sum")

    total = combine_hybrid(ctc_term, att_term, ctc_weight)
    return total, ctc_term, att_term


def hybrid_loss(mel: MelSpectrogram, phonemes, ckpt: RecognizerCheckpoint,
                ctc_weight: float | None = None) -> HybridLoss:
    if ctc_weight is None:
        ctc_weight = ckpt.config.ctc_weight
    if not 0.0 <= ctc_weight <= 1.0:
        raise InvalidInputError("ctc_weight must be in [0, 1]")
    ckpt.model.eval()
    with torch.no_grad():
        total, ctc_term, att_term = hybrid_loss_tensors(
            ckpt.model, _mel_tensor(mel, ckpt.model), phonemes, ctc_weight
        )
    return HybridLoss(float(total), float(ctc_term), float(att_term))


@dataclass(frozen=True)
class RecognitionResult:
    tokens: tuple[int, ...]
    score: float
    timed_out: bool


def _joint_score(model: RecognizerModel, encoded: torch.Tensor, tokens: list[int],
                 att_lp: float, ctc_weight: float) -> float:
    if tokens and ctc.min_frames(tokens) > encoded.shape[0]:
        ctc_lp = float("-inf")
    else:
        log_probs = model.ctc_log_probs(encoded)
        ctc_lp = float(ctc.ctc_log_likelihood(log_probs, tokens, model.blank_id))
    return ctc_weight * ctc_lp + (1.0 - ctc_weight) * att_lp


def _beam_search(model: RecognizerModel, encoded: torch.Tensor, beam: int,
                 max_len: int) -> tuple[list[tuple[list[int], float]], tuple[list[int], float]]:
    """Attention-driven beam search. Returns (finished, best_partial)."""
    banned = {model.blank_id, model.pad_id, model.sos_id}
    hyps: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[list[int], float]] = []
    best_partial = ([], float("-inf"))
    for _ in range(max_len):
        candidates: list[tuple[list[int], float]] = []
        for tokens, lp in hyps:
            tokens_in = torch.tensor([model.sos_id] + tokens, dtype=torch.long)
            logits = model.decoder_logits(encoded, tokens_in)
            step_lp = torch.log_softmax(logits[-1], dim=-1)
            order = torch.argsort(step_lp, descending=True)
            taken = 0
            for tok in order.tolist():
                if tok in banned:
                    continue
                score = lp + float(step_lp[tok])
                if tok == model.eos_id:
                    finished.append((tokens, score))
                else:
                    candidates.append((tokens + [tok], score))
                taken += 1
                if taken >= beam:
                    break
        candidates.sort(key=lambda h: h[1], reverse=True)
        hyps = candidates[:beam]
        if not hyps:
            break
        if hyps[0][1] > best_partial[1]:
            best_partial = hyps[0]
    return finished, best_partial


def _decode_once(model: RecognizerModel, encoded: torch.Tensor, beam: int,
                 max_len: int, weight: float) -> RecognitionResult:
    finished, partial = _beam_search(model, encoded, beam, max_len)
    if not finished:
        tokens, att_lp = partial
        score = _joint_score(model, encoded, tokens, att_lp, weight)
        return RecognitionResult(tuple(tokens), score, timed_out=True)
    scored = [
        (tokens, _joint_score(model, encoded, tokens, att_lp, weight))
        for tokens, att_lp in finished
    ]
    tokens, score = max(scored, key=lambda h: h[1])
    return RecognitionResult(tuple(tokens), score, timed_out=False)


def recognize(mel: MelSpectrogram, ckpt: RecognizerCheckpoint,
              beam: int = 4) -> RecognitionResult:
    """Decode a phoneme sequence with joint CTC/attention rescoring.

    Beam search is attention-driven; ended hypotheses are rescored with
    ctc_weight * logP_ctc + (1 - ctc_weight) * logP_att. The greedy
    result is always kept as a candidate, so a wider beam never returns
    a hypothesis scoring below it.
    """
    if beam < 1:
        raise InvalidInputError("beam must be >= 1")
    model = ckpt.model
    model.eval()
    weight = ckpt.config.ctc_weight
    with torch.no_grad():
        encoded = model.encode(_mel_tensor(mel, model))
        max_len = 2 * encoded.shape[0]
        greedy = _decode_once(model, encoded, 1, max_len, weight)
        if beam == 1:
            return greedy
        wide = _decode_once(model, encoded, beam, max_len, weight)
    return wide if wide.score >= greedy.score else greedy


def ctc_force_align(mel: MelSpectrogram, phonemes,
                    ckpt: RecognizerCheckpoint) -> list[int]:
    """Durations (mel frames per phoneme) from the best CTC path.

    Viterbi runs at the encoded rate; durations are scaled back up by the
    subsample factor and the final phoneme absorbs the framing remainder.
    """
    tokens = list(phonemes)
    if not tokens:
        raise InvalidInputError("empty phoneme sequence")
    model = ckpt.model
    model.eval()
    with torch.no_grad():
        encoded = model.encode(_mel_tensor(mel, model))
        log_probs = model.ctc_log_probs(encoded)
    enc_durations = ctc.ctc_viterbi_durations(log_probs, tokens, model.blank_id)
    factor = ckpt.config.subsample_factor
    durations = [d * factor for d in enc_durations]
    overshoot = sum(durations) - mel.n_frames
    durations[-1] -= overshoot  # ceil subsampling overshoots by < factor
    if durations[-1] < 1:
        raise InvalidInputError("alignment left no frames for the final phoneme")
    return durations
