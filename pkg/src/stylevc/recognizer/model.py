"""Hybrid CTC/attention recognizer: subsampling frontend plus transformer blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .. import kvdoc
from ..errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class RecognizerConfig:
    ctc_weight: float = 0.3  # weight on the CTC term of the joint objective
    encoder_blocks: int = 12
    decoder_blocks: int = 6
    attention_heads: int = 8
    model_width: int = 256
    subsample_factor: int = 4
    n_mels: int = 80
    ffn_multiplier: int = 4
    dropout: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.ctc_weight <= 1.0:
            raise InvalidConfigError("ctc_weight must be in [0, 1]")
        if self.subsample_factor < 1 or self.subsample_factor & (self.subsample_factor - 1):
            raise InvalidConfigError("subsample_factor must be a power of two >= 1")
        if self.model_width % self.attention_heads:
            raise InvalidConfigError("attention_heads must divide model_width")

    def to_kv(self) -> dict:
        return kvdoc.dataclass_to_kv(self)

    @classmethod
    def from_kv(cls, pairs: dict[str, str]) -> "RecognizerConfig":
        cfg = kvdoc.dataclass_from_kv(cls, pairs)
        cfg.validate()
        return cfg


def sinusoidal_encoding(length: int, width: int, dtype, device) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, width, 2, dtype=torch.float64) * (-math.log(10000.0) / width)
    )
    pe = torch.zeros(length, width, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div)[:, : width // 2]
    return pe.to(dtype=dtype, device=device)


class FeedForward(nn.Module):
    def __init__(self, width: int, mult: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(width, mult * width),
            nn.GELU(),
            nn.Dropout(dropout),
            nn.Linear(mult * width, width),
        )

    def forward(self, x):
        return self.net(x)


class EncoderBlock(nn.Module):
    def __init__(self, cfg: RecognizerConfig):
        super().__init__()
        w = cfg.model_width
        self.norm1 = nn.LayerNorm(w)
        self.attn = nn.MultiheadAttention(w, cfg.attention_heads,
                                          dropout=cfg.dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(w)
        self.ffn = FeedForward(w, cfg.ffn_multiplier, cfg.dropout)

    def forward(self, x):
        h = self.norm1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.ffn(self.norm2(x))


class DecoderBlock(nn.Module):
    def __init__(self, cfg: RecognizerConfig):
        super().__init__()
        w = cfg.model_width
        self.norm1 = nn.LayerNorm(w)
        self.self_attn = nn.MultiheadAttention(w, cfg.attention_heads,
                                               dropout=cfg.dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(w)
        self.cross_attn = nn.MultiheadAttention(w, cfg.attention_heads,
                                                dropout=cfg.dropout, batch_first=True)
        self.norm3 = nn.LayerNorm(w)
        self.ffn = FeedForward(w, cfg.ffn_multiplier, cfg.dropout)

    def forward(self, x, memory, causal_mask):
        h = self.norm1(x)
        x = x + self.self_attn(h, h, h, attn_mask=causal_mask, need_weights=False)[0]
        h = self.norm2(x)
        x = x + self.cross_attn(h, memory, memory, need_weights=False)[0]
        return x + self.ffn(self.norm3(x))


class SubsamplingFrontend(nn.Module):
    """Conv-pool stages, each halving the time and frequency axes (ceil)."""

    def __init__(self, cfg: RecognizerConfig):
        super().__init__()
        stages = int(math.log2(cfg.subsample_factor))
        channels = max(1, cfg.model_width // 8)
        layers = []
        in_ch = 1
        ch = channels
        for s in range(stages):
            layers += [
                nn.Conv2d(in_ch, ch, 3, padding=1),
                nn.GELU(),
                nn.Conv2d(ch, ch, 3, padding=1),
                nn.GELU(),
                nn.MaxPool2d(2, ceil_mode=True),
            ]
            in_ch = ch
            ch = ch * 2
        self.stages = stages
        self.convs = nn.Sequential(*layers) if layers else None
        freq_out = cfg.n_mels
        for _ in range(stages):
            freq_out = -(-freq_out // 2)
        in_features = (in_ch * freq_out) if layers else cfg.n_mels
        self.proj = nn.Linear(in_features, cfg.model_width)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        # mel: (T, n_mels) -> (T', width), T' = ceil(T / subsample_factor)
        if self.convs is None:
            return self.proj(mel)
        x = mel.unsqueeze(0).unsqueeze(0)  # (1, 1, T, F)
        x = self.convs(x)
        x = x.permute(0, 2, 1, 3).flatten(2)  # (1, T', C*F')
        return self.proj(x.squeeze(0))


class RecognizerModel(nn.Module):
    def __init__(self, cfg: RecognizerConfig, vocab_size: int,
                 blank_id: int, sos_id: int, eos_id: int, pad_id: int):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.blank_id = blank_id
        self.sos_id = sos_id
        self.eos_id = eos_id
        self.pad_id = pad_id

        self.frontend = SubsamplingFrontend(cfg)
        self.encoder_blocks = nn.ModuleList(
            EncoderBlock(cfg) for _ in range(cfg.encoder_blocks)
        )
        self.encoder_norm = nn.LayerNorm(cfg.model_width)
        self.ctc_head = nn.Linear(cfg.model_width, vocab_size)

        self.token_embed = nn.Embedding(vocab_size, cfg.model_width)
        self.decoder_blocks = nn.ModuleList(
            DecoderBlock(cfg) for _ in range(cfg.decoder_blocks)
        )
        self.decoder_norm = nn.LayerNorm(cfg.model_width)
        self.decoder_out = nn.Linear(cfg.model_width, vocab_size)

    @property
    def dtype(self):
        return next(self.parameters()).dtype

    def encode(self, mel: torch.Tensor) -> torch.Tensor:
        # mel: (T, n_mels) normalized log-mel
        if mel.shape[0] < self.cfg.subsample_factor:
            raise InvalidInputError(
                f"input too short: {mel.shape[0]} frames "
                f"(need >= {self.cfg.subsample_factor})"
            )
        if mel.shape[1] != self.cfg.n_mels:
            raise InvalidInputError(
                f"expected {self.cfg.n_mels} mel bins, got {mel.shape[1]}"
            )
        h = self.frontend(mel)
        h = h + sinusoidal_encoding(h.shape[0], h.shape[1], h.dtype, h.device)
        h = h.unsqueeze(0)
        for block in self.encoder_blocks:
            h = block(h)
        return self.encoder_norm(h).squeeze(0)

    def ctc_log_probs(self, encoded: torch.Tensor) -> torch.Tensor:
        return torch.log_softmax(self.ctc_head(encoded), dim=-1)

    def decoder_logits(self, encoded: torch.Tensor, tokens_in: torch.Tensor) -> torch.Tensor:
        # tokens_in: (U,) starting with sos; returns (U, vocab) next-token logits
        x = self.token_embed(tokens_in)
        x = x + sinusoidal_encoding(x.shape[0], x.shape[1], x.dtype, x.device)
        u = x.shape[0]
        mask = torch.triu(
            torch.full((u, u), float("-inf"), dtype=x.dtype, device=x.device), 1
        )
        x = x.unsqueeze(0)
        memory = encoded.unsqueeze(0)
        for block in self.decoder_blocks:
            x = block(x, memory, mask)
        return self.decoder_out(self.decoder_norm(x)).squeeze(0)
