"""Objective evaluation: phone error rate, F0 comparison, preference tallies."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .features import F0Contour

NO_PREFERENCE = "NP"


@dataclass(frozen=True)
class PerResult:
    sub_count: int
    del_count: int
    ins_count: int
    ref_len: int

    @property
    def sub_rate(self) -> float:
        return 100.0 * self.sub_count / self.ref_len

    @property
    def del_rate(self) -> float:
        return 100.0 * self.del_count / self.ref_len

    @property
    def ins_rate(self) -> float:
        return 100.0 * self.ins_count / self.ref_len

    @property
    def per(self) -> float:
        return 100.0 * (self.sub_count + self.del_count + self.ins_count) / self.ref_len

    def __str__(self) -> str:
        return (
            f"Sub {self.sub_rate:.1f}% Del {self.del_rate:.1f}% "
            f"Ins {self.ins_rate:.1f}% PER {self.per:.1f}%"
        )


def compute_per(hyp: Sequence, ref: Sequence) -> PerResult:
    """Minimum-edit-distance error decomposition of hyp against ref.

    Unit costs. On equal cost the backtrace prefers substitution, then
    deletion, then insertion.
    """
    if len(ref) == 0:
        raise InvalidInputError("reference sequence is empty")
    m, n = len(ref), len(hyp)
    dist = np.zeros((m + 1, n + 1), dtype=np.int64)
    dist[:, 0] = np.arange(m + 1)  # deletions
    dist[0, :] = np.arange(n + 1)  # insertions
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            sub = dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            dele = dist[i - 1, j] + 1
            ins = dist[i, j - 1] + 1
            dist[i, j] = min(sub, dele, ins)
    subs = dels = inss = 0
    i, j = m, n
    while i > 0 or j > 0:
        here = dist[i, j]
        if i > 0 and j > 0 and here == dist[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and here == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return PerResult(subs, dels, inss, m)


def corpus_per(hyp_set: dict[str, Sequence], ref_set: dict[str, Sequence]) -> PerResult:
    """Pooled PER: error counts summed over utterances, divided by total ref length."""
    missing_hyp = sorted(set(ref_set) - set(hyp_set))
    missing_ref = sorted(set(hyp_set) - set(ref_set))
    if missing_hyp or missing_ref:
        raise InvalidInputError(
            f"id mismatch; missing from hyp: {missing_hyp}, missing from ref: {missing_ref}"
        )
    subs = dels = inss = ref_len = 0
    for utt_id in ref_set:
        r = compute_per(hyp_set[utt_id], ref_set[utt_id])
        subs += r.sub_count
        dels += r.del_count
        inss += r.ins_count
        ref_len += r.ref_len
    return PerResult(subs, dels, inss, ref_len)


def write_per_rows(path: str | Path, rows: dict[str, PerResult]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "sub", "del", "ins", "ref_len"])
        for utt_id, r in rows.items():
            writer.writerow([utt_id, r.sub_count, r.del_count, r.ins_count, r.ref_len])


# ---------------------------------------------------------------------------
# F0 comparison


def plot_f0_overlay(contours, out_path: str | Path) -> Path:
    """Overlay labeled F0 contours in one SVG figure plus a companion CSV.

    Every contour must already be interpolated (fully voiced). Each series
    keeps its own frame count on the time axis; nothing is resampled.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if hasattr(contours, "items"):
        named = list(contours.items())
    else:
        named = list(contours)
    if not named:
        raise InvalidInputError("need at least one contour")
    for name, contour in named:
        if not contour.fully_voiced:
            raise InvalidInputError(f"contour {name!r} is not interpolated")

    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(8, 3.2))
    for name, contour in named:
        ax.plot(contour.times(), contour.values, label=name, linewidth=1.2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("F0 (Hz)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)

    csv_path = out_path.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["name", "frame", "time_s", "f0_hz"])
        for name, contour in named:
            for frame, (t, hz) in enumerate(zip(contour.times(), contour.values)):
                writer.writerow([name, frame, f"{t:.6f}", f"{hz:.6f}"])
    return out_path


def f0_similarity(a: F0Contour, b: F0Contour) -> dict[str, float]:
    """RMSE (Hz) and Pearson correlation of two interpolated contours.

    Unequal lengths are reconciled by linearly time-normalizing the longer
    contour onto the shorter one's grid.
    """
    for name, c in (("a", a), ("b", b)):
        if not c.fully_voiced:
            raise InvalidInputError(f"contour {name} is not interpolated")
        if c.n_frames < 2:
            raise InvalidInputError(f"contour {name} has fewer than 2 frames")
    va, vb = a.values, b.values
    if len(va) != len(vb):
        short, long_ = (va, vb) if len(va) < len(vb) else (vb, va)
        grid = np.linspace(0.0, 1.0, len(short))
        axis = np.linspace(0.0, 1.0, len(long_))
        resampled = np.interp(grid, axis, long_)
        va, vb = (short, resampled) if len(va) < len(vb) else (resampled, short)
    rmse = float(np.sqrt(np.mean((va - vb) ** 2)))
    sa, sb = np.std(va), np.std(vb)
    if sa < 1e-12 or sb < 1e-12:
        correlation = 1.0 if rmse < 1e-12 or (sa < 1e-12 and sb < 1e-12) else 0.0
    else:
        correlation = float(np.corrcoef(va, vb)[0, 1])
    return {"rmse_hz": rmse, "correlation": correlation}


# ---------------------------------------------------------------------------
# listening-test preference aggregation


@dataclass(frozen=True)
class PreferenceVote:
    """One listener response, already de-randomized to a system name or NP."""

    test_id: str
    system: str


@dataclass(frozen=True)
class PreferenceSummary:
    test_id: str
    counts: dict[str, int]
    n_responses: int

    @property
    def percentages(self) -> dict[str, float]:
        return {k: 100.0 * v / self.n_responses for k, v in self.counts.items()}


def aggregate_preferences(votes: list[PreferenceVote]) -> PreferenceSummary:
    """Tally per-system choice percentages, NP included."""
    if not votes:
        raise InvalidInputError("no responses to aggregate")
    test_ids = {v.test_id for v in votes}
    if len(test_ids) != 1:
        raise InvalidInputError(f"responses from mixed tests: {sorted(test_ids)}")
    counts: dict[str, int] = {NO_PREFERENCE: 0}
    for v in votes:
        counts[v.system] = counts.get(v.system, 0) + 1
    return PreferenceSummary(test_ids.pop(), counts, len(votes))


def write_preference_csv(path: str | Path, summary: PreferenceSummary) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["option", "count", "pct"])
        for option, count in sorted(summary.counts.items()):
            writer.writerow([option, count, f"{summary.percentages[option]:.1f}"])
