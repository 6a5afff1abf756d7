"""Speech generator: CBHG phoneme encoder, style-token encoder, speaker table,
rhythm predictor and an autoregressive mel decoder with a conv postnet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .. import kvdoc
from ..errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class GeneratorConfig:
    n_speakers: int = 2
    n_mels: int = 80
    frame_shift_ms: float = 12.5
    frame_length_ms: float = 50.0
    reduction: int = 2  # frames predicted per decoder step

    # CBHG phoneme encoder
    phoneme_embed_dim: int = 64
    cbhg_channels: int = 32
    cbhg_bank_k: int = 8
    cbhg_highway_layers: int = 4
    cbhg_gru_units: int = 32

    # style-token encoder
    style_dim: int = 256
    gst_tokens: int = 10
    gst_heads: int = 4
    ref_conv_layers: int = 6
    ref_conv_base: int = 8
    ref_gru_units: int = 32

    # speaker embedding table
    speaker_dim: int = 256

    # rhythm predictor
    rhythm_units: int = 128
    rhythm_layers: int = 3

    # decoder
    decoder_fc: int = 32
    decoder_prenet: int = 32
    decoder_lstm: int = 128
    postnet_channels: int = 64
    postnet_layers: int = 3

    dropout: float = 0.0
    # train-time regularizers on the previous-frame feedback path; they keep
    # the decoder from leaning on teacher frames instead of the conditioning
    prenet_dropout: float = 0.5
    teacher_noise: float = 0.0

    @property
    def encoded_dim(self) -> int:
        return 2 * self.cbhg_gru_units

    def validate(self) -> None:
        if self.n_speakers < 1:
            raise InvalidConfigError("need at least one speaker")
        if self.style_dim % self.gst_heads:
            raise InvalidConfigError("gst_heads must divide style_dim")
        if self.reduction < 1:
            raise InvalidConfigError("reduction must be >= 1")
        if self.gst_tokens < 1:
            raise InvalidConfigError("need at least one style token")

    def to_kv(self) -> dict:
        return kvdoc.dataclass_to_kv(self)

    @classmethod
    def from_kv(cls, pairs: dict[str, str]) -> "GeneratorConfig":
        cfg = kvdoc.dataclass_from_kv(cls, pairs)
        cfg.validate()
        return cfg


def _conv1d_same(x: torch.Tensor, conv: nn.Conv1d, k: int) -> torch.Tensor:
    # x: (C, T); same-length output for any kernel size
    left = k // 2
    right = k - 1 - left
    return conv(F.pad(x.unsqueeze(0), (left, right)).squeeze(0).unsqueeze(0)).squeeze(0)


class Highway(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.lin = nn.Linear(dim, dim)
        self.gate = nn.Linear(dim, dim)

    def forward(self, x):
        t = torch.sigmoid(self.gate(x))
        return torch.tanh(self.lin(x)) * t + x * (1.0 - t)


class CbhgEncoder(nn.Module):
    """Phoneme-sequence encoder: conv bank, pooling, projections, highway, BiGRU."""

    def __init__(self, cfg: GeneratorConfig, n_symbols: int):
        super().__init__()
        ch = cfg.cbhg_channels
        self.embed = nn.Embedding(n_symbols, cfg.phoneme_embed_dim)
        self.prenet = nn.Sequential(
            nn.Linear(cfg.phoneme_embed_dim, 2 * ch), nn.GELU(),
            nn.Linear(2 * ch, ch), nn.GELU(),
        )
        self.bank = nn.ModuleList(
            nn.Conv1d(ch, ch, k) for k in range(1, cfg.cbhg_bank_k + 1)
        )
        self.bank_norm = nn.LayerNorm(cfg.cbhg_bank_k * ch)
        self.proj1 = nn.Conv1d(cfg.cbhg_bank_k * ch, ch, 3, padding=1)
        self.proj2 = nn.Conv1d(ch, ch, 3, padding=1)
        self.proj_norm = nn.LayerNorm(ch)
        self.highways = nn.ModuleList(Highway(ch) for _ in range(cfg.cbhg_highway_layers))
        self.gru = nn.GRU(ch, cfg.cbhg_gru_units, batch_first=True, bidirectional=True)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        # tokens: (N,) -> (N, 2 * gru_units)
        x = self.prenet(self.embed(tokens))  # (N, ch)
        xc = x.t()  # (ch, N)
        banked = torch.cat(
            [F.gelu(_conv1d_same(xc, conv, k + 1)) for k, conv in enumerate(self.bank)],
            dim=0,
        )  # (K*ch, N)
        banked = self.bank_norm(banked.t()).t()
        pooled = F.pad(banked.unsqueeze(0), (0, 1)).squeeze(0)
        pooled = F.max_pool1d(pooled.unsqueeze(0), 2, stride=1).squeeze(0)  # (K*ch, N)
        h = F.gelu(self.proj1(pooled.unsqueeze(0)).squeeze(0))
        h = self.proj2(h.unsqueeze(0)).squeeze(0)  # (ch, N)
        h = self.proj_norm(h.t())
        h = h + x  # residual
        for hw in self.highways:
            h = hw(h)
        out, _ = self.gru(h.unsqueeze(0))
        return out.squeeze(0)


class StyleEncoder(nn.Module):
    """Reference mel encoder attending over a learned style-token bank."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        channels = [cfg.ref_conv_base * (2 ** (i // 2)) for i in range(cfg.ref_conv_layers)]
        convs = []
        in_ch = 1
        for out_ch in channels:
            convs += [nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1), nn.GELU()]
            in_ch = out_ch
        self.convs = nn.Sequential(*convs)
        freq = cfg.n_mels
        for _ in channels:
            freq = -(-freq // 2)
        self.gru = nn.GRU(in_ch * freq, cfg.ref_gru_units, batch_first=True)
        head_dim = cfg.style_dim // cfg.gst_heads
        self.tokens = nn.Parameter(torch.randn(cfg.gst_tokens, head_dim) * 0.3)
        self.query_proj = nn.Linear(cfg.ref_gru_units, cfg.gst_heads * head_dim)
        self.key_proj = nn.Linear(head_dim, cfg.gst_heads * head_dim, bias=False)

    def forward(self, mel: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # mel: (T, n_mels) -> (style_dim,), attention weights (heads, n_tokens)
        cfg = self.cfg
        x = self.convs(mel.unsqueeze(0).unsqueeze(0))  # (1, C, T', F')
        x = x.permute(0, 2, 1, 3).flatten(2)  # (1, T', C*F')
        _, h_n = self.gru(x)
        ref = h_n.squeeze(0).squeeze(0)  # (ref_gru_units,)
        head_dim = cfg.style_dim // cfg.gst_heads
        q = self.query_proj(ref).view(cfg.gst_heads, head_dim)
        values = torch.tanh(self.tokens)  # (n_tokens, head_dim)
        k = self.key_proj(values).view(cfg.gst_tokens, cfg.gst_heads, head_dim)
        scores = torch.einsum("hd,nhd->hn", q, k) / math.sqrt(head_dim)
        weights = torch.softmax(scores, dim=-1)  # (heads, n_tokens)
        style = (weights @ values).reshape(-1)  # concat of per-head mixtures
        return style, weights


class RhythmPredictor(nn.Module):
    """Per-phoneme log-duration head over stacked bidirectional LSTMs."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        in_dim = cfg.encoded_dim + cfg.style_dim + cfg.speaker_dim
        self.lstm = nn.LSTM(in_dim, cfg.rhythm_units, num_layers=cfg.rhythm_layers,
                            batch_first=True, bidirectional=True)
        self.head = nn.Linear(2 * cfg.rhythm_units, 1)

    def forward(self, encoded: torch.Tensor, style: torch.Tensor,
                speaker_vec: torch.Tensor) -> torch.Tensor:
        # encoded: (N, D); returns (N,) log-domain durations
        n = encoded.shape[0]
        cond = torch.cat(
            [encoded, style.expand(n, -1), speaker_vec.expand(n, -1)], dim=1
        )
        out, _ = self.lstm(cond.unsqueeze(0))
        return self.head(out.squeeze(0)).squeeze(-1)


class MelDecoder(nn.Module):
    """AR decoder over duration-expanded encodings; no stop token, the
    output length is fixed by the durations."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        self.fc = nn.Sequential(
            nn.Linear(cfg.encoded_dim, cfg.decoder_fc), nn.GELU(),
            nn.Linear(cfg.decoder_fc, cfg.decoder_fc), nn.GELU(),
        )
        self.prenet_fc1 = nn.Linear(cfg.n_mels, 2 * cfg.decoder_prenet)
        self.prenet_fc2 = nn.Linear(2 * cfg.decoder_prenet, cfg.decoder_prenet)
        step_in = cfg.reduction * cfg.decoder_fc + cfg.style_dim + cfg.speaker_dim \
            + cfg.decoder_prenet
        self.cell1 = nn.LSTMCell(step_in, cfg.decoder_lstm)
        self.cell2 = nn.LSTMCell(cfg.decoder_lstm, cfg.decoder_lstm)
        self.frame_out = nn.Linear(cfg.decoder_lstm, cfg.reduction * cfg.n_mels)

        post = []
        ch_in = cfg.n_mels
        for _ in range(cfg.postnet_layers - 1):
            post += [nn.Conv1d(ch_in, cfg.postnet_channels, 5, padding=2), nn.GELU()]
            ch_in = cfg.postnet_channels
        last = nn.Conv1d(ch_in, cfg.n_mels, 5, padding=2)
        # zero-init the residual branch: the coarse frames (the free-running
        # feedback signal) then track the loss target instead of drifting
        nn.init.zeros_(last.weight)
        nn.init.zeros_(last.bias)
        post.append(last)
        self.postnet = nn.Sequential(*post)

    def prenet(self, frame: torch.Tensor) -> torch.Tensor:
        if self.training and self.cfg.teacher_noise > 0:
            frame = frame + self.cfg.teacher_noise * torch.randn_like(frame)
        p = self.cfg.prenet_dropout if self.training else 0.0
        x = F.dropout(F.gelu(self.prenet_fc1(frame)), p, self.training)
        return F.dropout(F.gelu(self.prenet_fc2(x)), p, self.training)

    def forward(self, expanded: torch.Tensor, style: torch.Tensor,
                speaker_vec: torch.Tensor,
                teacher: torch.Tensor | None = None) -> torch.Tensor:
        # expanded: (R, encoded_dim) with R even (padded upstream)
        cfg = self.cfg
        r = cfg.reduction
        n_steps = expanded.shape[0] // r
        frame_feats = self.fc(expanded)  # (R, decoder_fc)
        dtype, device = expanded.dtype, expanded.device
        h1 = torch.zeros(1, cfg.decoder_lstm, dtype=dtype, device=device)
        c1 = torch.zeros_like(h1)
        h2 = torch.zeros_like(h1)
        c2 = torch.zeros_like(h1)
        prev = torch.zeros(cfg.n_mels, dtype=dtype, device=device)
        outputs = []
        for step in range(n_steps):
            chunk = frame_feats[step * r:(step + 1) * r].reshape(-1)
            x = torch.cat([chunk, style, speaker_vec, self.prenet(prev)]).unsqueeze(0)
            h1, c1 = self.cell1(x, (h1, c1))
            h2, c2 = self.cell2(h1, (h2, c2))
            frames = self.frame_out(h2).view(r, cfg.n_mels)
            outputs.append(frames)
            if teacher is not None:
                prev = teacher[(step + 1) * r - 1]
            else:
                prev = frames[-1]
        coarse = torch.cat(outputs, dim=0)  # (R, n_mels)
        residual = self.postnet(coarse.t().unsqueeze(0)).squeeze(0).t()
        return coarse + residual


class GeneratorModel(nn.Module):
    def __init__(self, cfg: GeneratorConfig, n_symbols: int):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.n_symbols = n_symbols
        self.cbhg = CbhgEncoder(cfg, n_symbols)
        self.gst = StyleEncoder(cfg)
        self.speaker_table = nn.Embedding(cfg.n_speakers, cfg.speaker_dim)
        self.rhythm = RhythmPredictor(cfg)
        self.decoder = MelDecoder(cfg)

    PARAMETER_GROUPS = ("cbhg", "gst", "speaker_table", "rhythm", "decoder")

    @property
    def dtype(self):
        return next(self.parameters()).dtype

    def speaker_vector(self, speaker: int) -> torch.Tensor:
        if not 0 <= speaker < self.cfg.n_speakers:
            raise InvalidInputError(
                f"speaker index {speaker} outside table of {self.cfg.n_speakers}"
            )
        idx = torch.tensor(speaker, dtype=torch.long)
        return self.speaker_table(idx)

    def encode_phonemes(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.numel() == 0:
            raise InvalidInputError("empty phoneme sequence")
        if int(tokens.min()) < 0 or int(tokens.max()) >= self.n_symbols:
            raise InvalidInputError("token index outside the phoneme inventory")
        return self.cbhg(tokens)
