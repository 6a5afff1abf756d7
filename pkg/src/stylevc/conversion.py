"""End-to-end conversion: source speech + reference style + target speaker
to generated mel and waveform, plus the batch driver used by experiments.
"""

from __future__ import annotations

import csv
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kvdoc
from .corpus import UtteranceRecord
from .errors import InvalidInputError, StyleVCError
from .features import (
    AudioWaveform,
    FeatureConfig,
    MelSpectrogram,
    compute_log_mel,
    invert_mel,
    read_wav,
    utterance_mvn,
    write_wav,
)
from .generator import (
    GeneratorCheckpoint,
    cbhg_encode,
    decode_mel,
    gst_encode,
    predict_rhythm,
    quantize_durations,
    state_expand,
)
from .recognizer import RecognizerCheckpoint, recognize


@dataclass
class ConversionResult:
    mel: MelSpectrogram
    wav: AudioWaveform
    phonemes: tuple[int, ...]
    phoneme_symbols: tuple[str, ...]
    durations: list[int]
    style: np.ndarray
    timed_out: bool


def convert(
    source_wav: AudioWaveform,
    reference_wav: AudioWaveform,
    target_speaker: int,
    rec_ckpt: RecognizerCheckpoint,
    gen_ckpt: GeneratorCheckpoint,
    cfg: FeatureConfig,
    beam: int = 4,
) -> ConversionResult:
    """Convert source speech to the target speaker, styled by the reference.

    Passing the source itself as the reference transfers the source
    speaking style. Intermediate artifacts are returned for inspection.
    """
    source_mel = compute_log_mel(source_wav, cfg)
    recognized = recognize(utterance_mvn(source_mel), rec_ckpt, beam=beam)
    if not recognized.tokens:
        raise InvalidInputError("recognizer produced an empty phoneme sequence")
    reference_mel = compute_log_mel(reference_wav, cfg)
    style = gst_encode(reference_mel, gen_ckpt)

    encoded = cbhg_encode(recognized.tokens, gen_ckpt)
    real_durations = predict_rhythm(encoded, style, target_speaker, gen_ckpt)
    durations = quantize_durations(real_durations)
    expanded = state_expand(encoded, durations)
    mel = decode_mel(expanded, style, target_speaker, gen_ckpt)
    wav = invert_mel(mel, cfg)
    symbols = gen_ckpt.inventory.decode(recognized.tokens)
    return ConversionResult(
        mel=mel,
        wav=wav,
        phonemes=recognized.tokens,
        phoneme_symbols=symbols,
        durations=durations,
        style=style.cpu().numpy(),
        timed_out=recognized.timed_out,
    )


# ---------------------------------------------------------------------------
# mel matrix file format: little-endian header + float32 data, row-major

_MEL_MAGIC = b"SVCM"
_MEL_VERSION = 1


def write_mel(path: str | Path, mel: MelSpectrogram) -> None:
    with open(path, "wb") as f:
        f.write(_MEL_MAGIC)
        f.write(struct.pack("<HII", _MEL_VERSION, mel.n_frames, mel.n_mels))
        f.write(struct.pack("<dd", mel.frame_shift_ms, mel.frame_length_ms))
        f.write(mel.frames.astype("<f4").tobytes())


def read_mel(path: str | Path) -> MelSpectrogram:
    with open(path, "rb") as f:
        if f.read(4) != _MEL_MAGIC:
            raise InvalidInputError(f"{path}: not a mel matrix file")
        version, n_frames, n_mels = struct.unpack("<HII", f.read(10))
        if version != _MEL_VERSION:
            raise InvalidInputError(f"{path}: unsupported mel format version {version}")
        shift, length = struct.unpack("<dd", f.read(16))
        data = np.frombuffer(f.read(n_frames * n_mels * 4), dtype="<f4")
    return MelSpectrogram(data.reshape(n_frames, n_mels).astype(np.float64), shift, length)


# ---------------------------------------------------------------------------
# batch conversion


@dataclass
class BatchReportRow:
    utt_id: str
    status: str  # "ok" or "failed: <reason>"
    output_frames: int
    wall_time_s: float


def batch_convert(
    records: list[UtteranceRecord],
    reference_policy: str,
    target_speaker: int,
    rec_ckpt: RecognizerCheckpoint,
    gen_ckpt: GeneratorCheckpoint,
    cfg: FeatureConfig,
    out_dir: str | Path,
    beam: int = 4,
) -> list[BatchReportRow]:
    """Convert every utterance in a manifest; per-utterance failures are
    recorded in the report rather than raised.

    reference_policy is either "source" (style transfer from each source
    utterance) or a path to one fixed reference WAV.
    """
    if not records:
        raise InvalidInputError("empty manifest")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fixed_reference = None
    reference_id = "source"
    if reference_policy != "source":
        fixed_reference = read_wav(reference_policy, target_rate=cfg.sample_rate)
        reference_id = str(reference_policy)

    report: list[BatchReportRow] = []
    for record in records:
        start = time.perf_counter()
        try:
            source = read_wav(record.audio_path, target_rate=cfg.sample_rate)
            reference = source if fixed_reference is None else fixed_reference
            result = convert(source, reference, target_speaker,
                             rec_ckpt, gen_ckpt, cfg, beam=beam)
            write_wav(out_dir / f"{record.id}.wav", result.wav)
            write_mel(out_dir / f"{record.id}.mel", result.mel)
            kvdoc.write(out_dir / f"{record.id}.meta", {
                "phonemes": " ".join(result.phoneme_symbols),
                "durations": " ".join(str(d) for d in result.durations),
                "speaker": gen_ckpt.speakers[target_speaker],
                "reference": reference_id if fixed_reference is not None else record.id,
                "timed_out": result.timed_out,
            })
            elapsed = time.perf_counter() - start
            report.append(BatchReportRow(record.id, "ok", result.mel.n_frames, elapsed))
        except (StyleVCError, OSError, ValueError) as exc:
            elapsed = time.perf_counter() - start
            report.append(BatchReportRow(record.id, f"failed: {exc}", 0, elapsed))
    write_report(out_dir / "report.csv", report)
    return report


def write_report(path: str | Path, report: list[BatchReportRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "status", "output_frames", "wall_time_s"])
        for row in report:
            writer.writerow([row.utt_id, row.status, row.output_frames,
                             f"{row.wall_time_s:.3f}"])
