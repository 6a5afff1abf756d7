"""Independent oracles and shared fixtures-support code.

Everything here is deliberately written as straightforwardly as possible,
separate from the production implementations it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import torch

# ---------------------------------------------------------------------------
# oracle: STFT + mel spectrogram, loop-based


def oracle_log_mel(samples: np.ndarray, sample_rate: int, n_mels: int,
                   shift: int, win: int, n_fft: int, floor: float = 1e-10) -> np.ndarray:
    n = len(samples)
    t_frames = int(math.ceil(n / shift))
    pad = win // 2
    # reflect padding by explicit index arithmetic
    def sample_at(i: int) -> float:
        if n == 1:
            return float(samples[0])
        period = 2 * n - 2
        i = i % period
        if i >= n:
            i = period - i
        return float(samples[i])

    window = np.array([0.5 - 0.5 * math.cos(2 * math.pi * k / win) for k in range(win)])
    fft_freqs = [k * sample_rate / n_fft for k in range(n_fft // 2 + 1)]

    def hz_to_mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    mel_edges = [mel_to_hz(hz_to_mel(sample_rate / 2.0) * i / (n_mels + 1))
                 for i in range(n_mels + 2)]
    out = np.zeros((t_frames, n_mels))
    for t in range(t_frames):
        frame = np.array([sample_at(t * shift - pad + k) for k in range(win)]) * window
        spectrum = np.fft.rfft(frame, n=n_fft)
        mag = np.abs(spectrum)
        for m in range(n_mels):
            lo, center, hi = mel_edges[m], mel_edges[m + 1], mel_edges[m + 2]
            acc = 0.0
            for k, f in enumerate(fft_freqs):
                if lo < f < hi:
                    w = (f - lo) / (center - lo) if f <= center else (hi - f) / (hi - center)
                    acc += w * mag[k]
            out[t, m] = math.log(max(acc, floor))
    return out


# ---------------------------------------------------------------------------
# oracle: CTC likelihood by exhaustive path enumeration


def oracle_ctc_log_likelihood(log_probs: np.ndarray, targets: list[int],
                              blank: int) -> float | None:
    """Sum over every frame-level path that collapses to the targets."""
    t_len, vocab = log_probs.shape
    path_lps = []
    for path in itertools.product(range(vocab), repeat=t_len):
        collapsed: list[int] = []
        prev = None
        for s in path:
            if s != prev and s != blank:
                collapsed.append(s)
            prev = s
        if collapsed == list(targets):
            path_lps.append(sum(log_probs[t, s] for t, s in enumerate(path)))
    if not path_lps:
        return None
    m = max(path_lps)
    return m + math.log(sum(math.exp(x - m) for x in path_lps))


def oracle_ctc_best_path(log_probs: np.ndarray, targets: list[int],
                         blank: int) -> tuple[float, tuple[int, ...]]:
    """Best-scoring path (exhaustive) that collapses to the targets."""
    t_len, vocab = log_probs.shape
    best_lp, best_path = -math.inf, None
    for path in itertools.product(range(vocab), repeat=t_len):
        collapsed: list[int] = []
        prev = None
        for s in path:
            if s != prev and s != blank:
                collapsed.append(s)
            prev = s
        if collapsed == list(targets):
            lp = sum(log_probs[t, s] for t, s in enumerate(path))
            if lp > best_lp:
                best_lp, best_path = lp, path
    return best_lp, best_path


# ---------------------------------------------------------------------------
# oracle: edit-distance decomposition (memoized recursion, suffix decisions)


def oracle_per_counts(hyp, ref) -> tuple[int, int, int]:
    """(sub, del, ins) of the optimal alignment; ties broken by preferring
    substitution, then deletion, then insertion at each decision point."""

    from functools import lru_cache

    hyp = tuple(hyp)
    ref = tuple(ref)

    @lru_cache(maxsize=None)
    def best(i: int, j: int) -> tuple[int, tuple[int, int, int]]:
        # cost + counts of aligning ref[:i] against hyp[:j]
        if i == 0 and j == 0:
            return 0, (0, 0, 0)
        options = []  # (cost, priority, counts)
        if i > 0 and j > 0:
            cost, (s, d, n) = best(i - 1, j - 1)
            miss = int(ref[i - 1] != hyp[j - 1])
            options.append((cost + miss, 0, (s + miss, d, n)))
        if i > 0:
            cost, (s, d, n) = best(i - 1, j)
            options.append((cost + 1, 1, (s, d + 1, n)))
        if j > 0:
            cost, (s, d, n) = best(i, j - 1)
            options.append((cost + 1, 2, (s, d, n + 1)))
        options.sort(key=lambda o: (o[0], o[1]))
        return options[0][0], options[0][2]

    return best(len(ref), len(hyp))[1]


def oracle_edit_distance(hyp, ref) -> int:
    s, d, n = oracle_per_counts(hyp, ref)
    return s + d + n


# ---------------------------------------------------------------------------
# oracle: contour similarity


def oracle_f0_similarity(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    if len(a) != len(b):
        if len(a) < len(b):
            b = np.interp(np.linspace(0, 1, len(a)), np.linspace(0, 1, len(b)), b)
        else:
            a = np.interp(np.linspace(0, 1, len(b)), np.linspace(0, 1, len(a)), a)
    rmse = math.sqrt(float(np.mean((a - b) ** 2)))
    am, bm = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.sum(am * am)) * float(np.sum(bm * bm)))
    corr = float(np.sum(am * bm)) / denom if denom > 0 else float("nan")
    return rmse, corr


# ---------------------------------------------------------------------------
# finite-difference gradient check


def finite_difference_check(model: torch.nn.Module, loss_fn, h: float = 1e-5,
                            rel_tol: float = 1e-4) -> tuple[float, str]:
    """Compare autograd gradients of loss_fn() against central differences
    for every parameter element. Returns (worst relative error, location).

    The relative error uses a 1e-6 denominator floor so coordinates whose
    true gradient is exactly zero compare FD roundoff against zero sanely.
    """
    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    worst, worst_name = 0.0, ""
    for name, p in model.named_parameters():
        flat = p.data.view(-1)
        grad = p.grad.view(-1) if p.grad is not None else torch.zeros_like(flat)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            with torch.no_grad():
                up = loss_fn().item()
            flat[i] = orig - h
            with torch.no_grad():
                down = loss_fn().item()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            an = grad[i].item()
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            if rel > worst:
                worst, worst_name = rel, f"{name}[{i}]"
    assert worst <= rel_tol, f"gradient mismatch {worst:.3e} at {worst_name}"
    return worst, worst_name


# ---------------------------------------------------------------------------
# synthetic speech-like signal for inversion tests


def speechlike_signal(sample_rate: int, n_samples: int, seed: int = 7) -> np.ndarray:
    """Formant-filtered pulse train plus breath noise with a slow AM."""
    from scipy.signal import lfilter

    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / sample_rate
    f0 = 110 + 40 * np.sin(2 * np.pi * 1.1 * t)
    phase = np.cumsum(f0) / sample_rate
    pulses = (np.diff(np.floor(phase), prepend=0) > 0).astype(float)
    poles = np.poly([
        0.97 * np.exp(1j * 2 * np.pi * 500 / sample_rate),
        0.97 * np.exp(-1j * 2 * np.pi * 500 / sample_rate),
        0.96 * np.exp(1j * 2 * np.pi * 1500 / sample_rate),
        0.96 * np.exp(-1j * 2 * np.pi * 1500 / sample_rate),
    ]).real
    voiced = lfilter([1.0], poles, pulses)
    noise = lfilter([1, -0.9], [1], rng.standard_normal(n_samples))
    mix = 0.8 * voiced / np.abs(voiced).max() * (0.6 + 0.4 * np.sin(2 * np.pi * 2.3 * t))
    mix = mix + 0.12 * noise / np.abs(noise).max()
    return mix / np.abs(mix).max()
