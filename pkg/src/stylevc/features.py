"""Signal-processing frontend.

Waveform to log-mel spectrogram, utterance-level normalization, F0
extraction with continuous interpolation, and Griffin-Lim mel inversion.
All functions are pure and deterministic.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from . import kvdoc
from .errors import InvalidConfigError, InvalidInputError, NoVoicedFramesError

LOG_FLOOR = 1e-10
MVN_VAR_FLOOR = 1e-8
GRIFFIN_LIM_ITERS = 60
VOICING_THRESHOLD = 0.3
ENERGY_FLOOR = 1e-5


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 24000
    n_mels: int = 80
    frame_shift_ms: float = 12.5
    frame_length_ms: float = 50.0
    f0_floor: float = 50.0
    f0_ceil: float = 500.0

    @property
    def shift_samples(self) -> int:
        return int(round(self.sample_rate * self.frame_shift_ms / 1000.0))

    @property
    def length_samples(self) -> int:
        return int(round(self.sample_rate * self.frame_length_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        n = 1
        while n < self.length_samples:
            n *= 2
        return n

    def validate(self) -> None:
        if self.sample_rate <= 0:
            raise InvalidConfigError("sample_rate must be positive")
        if self.n_mels < 1:
            raise InvalidConfigError("n_mels must be >= 1")
        if self.length_samples < self.shift_samples:
            raise InvalidConfigError("frame length must be >= frame shift")
        if not 0 < self.f0_floor < self.f0_ceil:
            raise InvalidConfigError("need 0 < f0_floor < f0_ceil")

    def save(self, path: str | Path) -> None:
        kvdoc.write(path, kvdoc.dataclass_to_kv(self))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureConfig":
        cfg = kvdoc.dataclass_from_kv(cls, kvdoc.read(path))
        cfg.validate()
        return cfg


@dataclass
class AudioWaveform:
    samples: np.ndarray  # float, [-1, 1]
    sample_rate: int = 24000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise InvalidInputError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def check(self) -> None:
        if self.samples.size == 0:
            raise InvalidInputError("empty waveform")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("waveform contains non-finite samples")


@dataclass
class MelSpectrogram:
    frames: np.ndarray  # (T, n_mels) log-mel energies
    frame_shift_ms: float
    frame_length_ms: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise InvalidInputError("mel frames must be a 2-D matrix")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]

    def check(self, n_mels: int | None = None) -> None:
        if n_mels is not None and self.n_mels != n_mels:
            raise InvalidInputError(
                f"expected {n_mels} mel bins, got {self.n_mels}"
            )
        if not np.all(np.isfinite(self.frames)):
            raise InvalidInputError("mel frames contain non-finite values")


@dataclass
class F0Contour:
    values: np.ndarray  # Hz, 0 where unvoiced
    voiced: np.ndarray  # bool per frame
    frame_shift_ms: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.values.shape != self.voiced.shape:
            raise InvalidInputError("values and voiced must have equal length")

    @property
    def n_frames(self) -> int:
        return len(self.values)

    @property
    def fully_voiced(self) -> bool:
        return bool(np.all(self.voiced))

    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_shift_ms / 1000.0


# ---------------------------------------------------------------------------
# framing helpers


def _reflect_indices(n: int, pad: int) -> np.ndarray:
    """Index array implementing centered reflect padding for any pad size."""
    idx = np.arange(-pad, n + pad)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def frame_count(num_samples: int, shift: int) -> int:
    return -(-num_samples // shift)  # ceil


def _frame_signal(x: np.ndarray, win: int, shift: int) -> np.ndarray:
    """Centered frames with reflect padding, shape (T, win), T = ceil(N/shift)."""
    n = len(x)
    pad = win // 2
    padded = x[_reflect_indices(n, pad)]
    t = frame_count(n, shift)
    starts = np.arange(t) * shift
    # last start + win never exceeds the padded length for win >= shift
    offsets = np.arange(win)
    return padded[starts[:, None] + offsets[None, :]]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank, (n_mels, n_fft//2 + 1), peak-normalized."""
    n_bins = n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate / n_fft
    mel_points = np.linspace(0.0, _hz_to_mel(sample_rate / 2.0), n_mels + 2)
    hz_points = _mel_to_hz(mel_points)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (fft_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def _stft_magnitude(samples: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    frames = _frame_signal(samples, cfg.length_samples, cfg.shift_samples)
    window = np.hanning(cfg.length_samples + 1)[:-1]  # periodic Hann
    return np.abs(np.fft.rfft(frames * window, n=cfg.n_fft, axis=1))


# ---------------------------------------------------------------------------
# public operations


def compute_log_mel(wav: AudioWaveform, cfg: FeatureConfig) -> MelSpectrogram:
    """Log-mel spectrogram of a waveform, T = ceil(num_samples / shift)."""
    cfg.validate()
    wav.check()
    if wav.sample_rate != cfg.sample_rate:
        wav = resample(wav, cfg.sample_rate)
    mag = _stft_magnitude(wav.samples, cfg)
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate)
    mel = mag @ fb.T
    logmel = np.log(np.maximum(mel, LOG_FLOOR))
    return MelSpectrogram(logmel, cfg.frame_shift_ms, cfg.frame_length_ms)


def utterance_mvn(mel: MelSpectrogram) -> MelSpectrogram:
    """Per-dimension zero-mean unit-variance normalization over the utterance.

    Constant dimensions map to zero (variance floored). Idempotent.
    """
    mel.check()
    if mel.n_frames < 1:
        raise InvalidInputError("need at least one frame")
    mean = mel.frames.mean(axis=0)
    var = mel.frames.var(axis=0)
    std = np.sqrt(np.maximum(var, MVN_VAR_FLOOR))
    return MelSpectrogram(
        (mel.frames - mean) / std, mel.frame_shift_ms, mel.frame_length_ms
    )


def extract_f0(wav: AudioWaveform, cfg: FeatureConfig) -> F0Contour:
    """F0 via normalized autocorrelation at the mel frame rate.

    Unvoiced frames (peak correlation below threshold, or near-silent)
    get value 0 and voiced=False.
    """
    cfg.validate()
    wav.check()
    if cfg.sample_rate < 2 * cfg.f0_ceil:
        raise InvalidConfigError("sample rate below twice the F0 ceiling")
    if wav.sample_rate != cfg.sample_rate:
        wav = resample(wav, cfg.sample_rate)
    sr = cfg.sample_rate
    lag_min = max(2, int(np.floor(sr / cfg.f0_ceil)))
    lag_max = int(np.ceil(sr / cfg.f0_floor))
    # window long enough for two periods at the lowest F0
    win = max(cfg.length_samples, 2 * lag_max)
    frames = _frame_signal(wav.samples, win, cfg.shift_samples)
    t = frames.shape[0]
    values = np.zeros(t)
    voiced = np.zeros(t, dtype=bool)
    for i in range(t):
        x = frames[i] - frames[i].mean()
        rms = np.sqrt(np.mean(x * x))
        if rms < ENERGY_FLOOR:
            continue
        corr = _normalized_autocorr(x, lag_min, lag_max)
        best = _pick_pitch_lag(corr)
        if corr[best] < VOICING_THRESHOLD:
            continue
        lag = lag_min + best + _parabolic_offset(corr, best)
        f0 = sr / lag
        if cfg.f0_floor <= f0 <= cfg.f0_ceil:
            values[i] = f0
            voiced[i] = True
    return F0Contour(values, voiced, cfg.frame_shift_ms)


def _normalized_autocorr(x: np.ndarray, lag_min: int, lag_max: int) -> np.ndarray:
    n = len(x)
    lag_max = min(lag_max, n - 1)
    lags = np.arange(lag_min, lag_max + 1)
    out = np.zeros(len(lags))
    energy = np.cumsum(x * x)
    total = energy[-1]
    for j, lag in enumerate(lags):
        a = x[: n - lag]
        b = x[lag:]
        e_a = energy[n - lag - 1]
        e_b = total - (energy[lag - 1] if lag >= 1 else 0.0)
        denom = np.sqrt(e_a * e_b)
        if denom > 0:
            out[j] = np.dot(a, b) / denom
    return out


def _pick_pitch_lag(corr: np.ndarray) -> int:
    """Smallest-lag peak within 0.02 of the global maximum.

    Periodic signals correlate equally at every multiple of the true
    period; preferring the shortest such lag avoids subharmonic errors.
    """
    best = float(np.max(corr))
    for i in range(len(corr)):
        left = corr[i - 1] if i > 0 else -np.inf
        right = corr[i + 1] if i < len(corr) - 1 else -np.inf
        if corr[i] >= best - 0.02 and corr[i] >= left and corr[i] >= right:
            return i
    return int(np.argmax(corr))


def _parabolic_offset(corr: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(corr) - 1:
        return 0.0
    left, mid, right = corr[i - 1], corr[i], corr[i + 1]
    denom = left - 2 * mid + right
    if abs(denom) < 1e-12:
        return 0.0
    return 0.5 * (left - right) / denom


def interpolate_f0(contour: F0Contour) -> F0Contour:
    """Fill unvoiced gaps by linear interpolation, edges by nearest value."""
    if not np.any(contour.voiced):
        raise NoVoicedFramesError("contour has no voiced frames")
    if contour.fully_voiced:
        return F0Contour(
            contour.values.copy(), contour.voiced.copy(), contour.frame_shift_ms
        )
    idx = np.arange(contour.n_frames)
    voiced_idx = idx[contour.voiced]
    filled = np.interp(idx, voiced_idx, contour.values[contour.voiced])
    return F0Contour(filled, np.ones_like(contour.voiced), contour.frame_shift_ms)


def invert_mel(mel: MelSpectrogram, cfg: FeatureConfig,
               n_iters: int = GRIFFIN_LIM_ITERS) -> AudioWaveform:
    """Griffin-Lim reconstruction from a log-mel spectrogram.

    Output has exactly n_frames * shift samples at cfg.sample_rate.
    """
    cfg.validate()
    mel.check(cfg.n_mels)
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate)
    energy = np.exp(mel.frames)
    mag = np.maximum(energy @ np.linalg.pinv(fb).T, 0.0)  # (T, n_bins)
    rng = np.random.default_rng(0)  # fixed phase init keeps inversion deterministic
    phase = np.exp(2j * np.pi * rng.random(mag.shape))
    target_len = mel.n_frames * cfg.shift_samples
    signal = _istft(mag * phase, cfg, target_len)
    for _ in range(n_iters):
        spectrum = _stft_complex(signal, cfg, mel.n_frames)
        phase = np.exp(1j * np.angle(spectrum))
        signal = _istft(mag * phase, cfg, target_len)
    peak = np.max(np.abs(signal))
    if peak > 1.0:
        signal = signal / peak
    return AudioWaveform(signal, cfg.sample_rate)


def _stft_complex(samples: np.ndarray, cfg: FeatureConfig, t: int) -> np.ndarray:
    frames = _frame_signal(samples, cfg.length_samples, cfg.shift_samples)[:t]
    window = np.hanning(cfg.length_samples + 1)[:-1]
    return np.fft.rfft(frames * window, n=cfg.n_fft, axis=1)


def _istft(spectrum: np.ndarray, cfg: FeatureConfig, target_len: int) -> np.ndarray:
    win = cfg.length_samples
    shift = cfg.shift_samples
    window = np.hanning(win + 1)[:-1]
    frames = np.fft.irfft(spectrum, n=cfg.n_fft, axis=1)[:, :win]
    t = spectrum.shape[0]
    pad = win // 2
    length = (t - 1) * shift + win
    acc = np.zeros(length)
    norm = np.zeros(length)
    wsq = window * window
    for i in range(t):
        start = i * shift
        acc[start:start + win] += frames[i] * window
        norm[start:start + win] += wsq
    acc = acc / np.maximum(norm, 1e-10)
    out = acc[pad:pad + target_len]
    if len(out) < target_len:
        out = np.pad(out, (0, target_len - len(out)))
    return out


def truncate_to_min(mel: MelSpectrogram, f0: F0Contour) -> tuple[MelSpectrogram, F0Contour]:
    """Reconcile an off-by-one frame-count mismatch by truncating to the min."""
    t = min(mel.n_frames, f0.n_frames)
    mel_t = MelSpectrogram(mel.frames[:t], mel.frame_shift_ms, mel.frame_length_ms)
    f0_t = F0Contour(f0.values[:t], f0.voiced[:t], f0.frame_shift_ms)
    return mel_t, f0_t


# ---------------------------------------------------------------------------
# WAV I/O: RIFF, 16-bit PCM mono


def read_wav(path: str | Path, target_rate: int | None = None) -> AudioWaveform:
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise InvalidInputError(f"{path}: expected mono audio")
        if f.getsampwidth() != 2:
            raise InvalidInputError(f"{path}: expected 16-bit PCM")
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    wav = AudioWaveform(samples, rate)
    if target_rate is not None and rate != target_rate:
        wav = resample(wav, target_rate)
    return wav


def write_wav(path: str | Path, wav: AudioWaveform) -> None:
    clipped = np.clip(wav.samples, -1.0, 1.0)
    pcm = (clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(wav.sample_rate)
        f.writeframes(pcm.tobytes())


def resample(wav: AudioWaveform, target_rate: int) -> AudioWaveform:
    if wav.sample_rate == target_rate:
        return wav
    from math import gcd

    g = gcd(wav.sample_rate, target_rate)
    up, down = target_rate // g, wav.sample_rate // g
    return AudioWaveform(resample_poly(wav.samples, up, down), target_rate)
