"""Synthetic desk-scale corpus: spectrally distinct pseudo-phonemes with
known durations, so the full pipeline can be exercised without real data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import (
    AlignmentTable,
    PhonemeInventory,
    UtteranceRecord,
    save_manifest,
)
from .features import AudioWaveform, FeatureConfig, write_wav

TOY_SYMBOLS = ("aa", "ee", "ii", "oo", "uu", "ss", "tt", "nn")
TOY_SPEAKERS = ("spk0", "spk1", "spk2")


def toy_feature_config() -> FeatureConfig:
    # 8 kHz / 40 mels keeps the toy models fast while exercising every op
    return FeatureConfig(sample_rate=8000, n_mels=40)


def toy_inventory() -> PhonemeInventory:
    return PhonemeInventory(TOY_SYMBOLS)


def _phoneme_freqs(index: int) -> tuple[float, float]:
    f1 = 260.0 + 210.0 * index
    return f1, 2.35 * f1


def synthesize_utterance(
    phonemes: list[int],
    durations: list[int],
    speaker_factor: float,
    cfg: FeatureConfig,
    rng: np.random.Generator,
) -> AudioWaveform:
    """Each phoneme is a two-tone burst with an attack/decay envelope;
    the speaker scales the tone frequencies."""
    shift = cfg.shift_samples
    pieces = []
    for ph, dur in zip(phonemes, durations):
        n = dur * shift
        t = np.arange(n) / cfg.sample_rate
        f1, f2 = _phoneme_freqs(ph)
        f1, f2 = f1 * speaker_factor, f2 * speaker_factor
        tone = 0.55 * np.sin(2 * np.pi * f1 * t) + 0.3 * np.sin(2 * np.pi * f2 * t)
        ramp = min(max(n // 10, 1), n // 2)
        envelope = np.ones(n)
        envelope[:ramp] = np.linspace(0.15, 1.0, ramp)
        envelope[-ramp:] = np.linspace(1.0, 0.15, ramp)
        pieces.append(tone * envelope + 0.004 * rng.standard_normal(n))
    samples = np.concatenate(pieces)
    peak = np.max(np.abs(samples))
    return AudioWaveform(0.8 * samples / peak, cfg.sample_rate)


def make_toy_corpus(
    out_dir: str | Path,
    n_utterances: int = 20,
    n_speakers: int = 3,
    min_phones: int = 4,
    max_phones: int = 7,
    min_dur: int = 8,
    max_dur: int = 16,
    seed: int = 0,
) -> tuple[list[UtteranceRecord], PhonemeInventory, AlignmentTable, FeatureConfig]:
    """Write wavs, manifest, inventory, alignments and the feature config."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wavs"
    wav_dir.mkdir(parents=True, exist_ok=True)
    cfg = toy_feature_config()
    inventory = toy_inventory()
    rng = np.random.default_rng(seed)
    speaker_factors = 1.0 + 0.07 * (np.arange(n_speakers) - (n_speakers - 1) / 2.0)

    records = []
    durations_by_id = {}
    for i in range(n_utterances):
        n_phones = int(rng.integers(min_phones, max_phones + 1))
        phones = []
        while len(phones) < n_phones:
            candidate = int(rng.integers(0, len(TOY_SYMBOLS)))
            if not phones or candidate != phones[-1]:  # avoid immediate repeats
                phones.append(candidate)
        durations = [int(rng.integers(min_dur, max_dur + 1)) for _ in phones]
        speaker = i % n_speakers
        wav = synthesize_utterance(phones, durations, float(speaker_factors[speaker]),
                                   cfg, rng)
        utt_id = f"utt{i:03d}"
        wav_path = wav_dir / f"{utt_id}.wav"
        write_wav(wav_path, wav)
        records.append(UtteranceRecord(
            utt_id, str(wav_path), TOY_SPEAKERS[speaker],
            tuple(TOY_SYMBOLS[p] for p in phones),
        ))
        durations_by_id[utt_id] = durations

    save_manifest(out_dir / "manifest.tsv", records)
    inventory.save(out_dir / "inventory.txt")
    table = AlignmentTable(durations_by_id)
    table.save(out_dir / "alignments.txt")
    cfg.save(out_dir / "features.cfg")
    return records, inventory, table, cfg
