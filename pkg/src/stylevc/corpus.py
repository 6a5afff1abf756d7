"""Dataset ingestion: manifests, phoneme inventory, duration alignments.

File formats (all UTF-8):
  manifest  - one utterance per line: id<TAB>audio_path<TAB>speaker<TAB>phonemes
              (phonemes space-separated)
  inventory - one symbol per line; specials declared in a header line
              `#specials blank=<blk> sos=<sos> eos=<eos> pad=<pad>`
  alignment - one utterance per line: id then space-separated frame counts
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AlignmentError, CorpusValidationError

log = logging.getLogger(__name__)

DEFAULT_SPECIALS = {"blank": "<blk>", "sos": "<sos>", "eos": "<eos>", "pad": "<pad>"}


@dataclass(frozen=True)
class PhonemeInventory:
    symbols: tuple[str, ...]
    specials: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_SPECIALS))

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise CorpusValidationError("duplicate symbols in inventory")
        if set(self.specials) != {"blank", "sos", "eos", "pad"}:
            raise CorpusValidationError("specials must name blank, sos, eos, pad")
        if set(self.specials.values()) & set(self.symbols):
            raise CorpusValidationError("special symbols overlap the inventory")

    # index layout: phoneme symbols first, then blank, sos, eos, pad
    @property
    def size(self) -> int:
        return len(self.symbols) + 4

    @property
    def blank_id(self) -> int:
        return len(self.symbols)

    @property
    def sos_id(self) -> int:
        return len(self.symbols) + 1

    @property
    def eos_id(self) -> int:
        return len(self.symbols) + 2

    @property
    def pad_id(self) -> int:
        return len(self.symbols) + 3

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise CorpusValidationError(f"unknown phoneme symbol: {symbol!r}") from None

    def encode(self, symbols: list[str] | tuple[str, ...]) -> tuple[int, ...]:
        lookup = {s: i for i, s in enumerate(self.symbols)}
        out = []
        for s in symbols:
            if s not in lookup:
                raise CorpusValidationError(f"unknown phoneme symbol: {s!r}")
            out.append(lookup[s])
        return tuple(out)

    def decode(self, tokens) -> tuple[str, ...]:
        out = []
        for t in tokens:
            if not 0 <= t < len(self.symbols):
                raise CorpusValidationError(f"token index {t} outside inventory")
            out.append(self.symbols[t])
        return tuple(out)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for s in self.symbols:
            h.update(s.encode("utf-8") + b"\n")
        for k in sorted(self.specials):
            h.update(f"{k}={self.specials[k]}\n".encode("utf-8"))
        return h.hexdigest()[:16]

    def save(self, path: str | Path) -> None:
        header = "#specials " + " ".join(
            f"{k}={self.specials[k]}" for k in ("blank", "sos", "eos", "pad")
        )
        Path(path).write_text(
            header + "\n" + "".join(s + "\n" for s in self.symbols), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "PhonemeInventory":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        specials = dict(DEFAULT_SPECIALS)
        symbols = []
        for line in lines:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#specials"):
                for item in line.split()[1:]:
                    key, _, value = item.partition("=")
                    specials[key] = value
            elif not line.startswith("#"):
                symbols.append(line)
        return cls(tuple(symbols), specials)


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    audio_path: str
    speaker: str
    phonemes: tuple[str, ...]


def load_manifest(path: str | Path, inventory: PhonemeInventory) -> list[UtteranceRecord]:
    """Parse and validate a manifest against the inventory."""
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    known = set(inventory.symbols)
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise CorpusValidationError(
                f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}"
            )
        utt_id, audio_path, speaker, phoneme_str = parts
        phonemes = tuple(phoneme_str.split())
        if not phonemes:
            raise CorpusValidationError(f"{path}:{lineno}: utterance {utt_id}: empty phoneme sequence")
        if utt_id in seen:
            raise CorpusValidationError(f"{path}:{lineno}: duplicate utterance id {utt_id}")
        for s in phonemes:
            if s not in known:
                raise CorpusValidationError(
                    f"utterance {utt_id}: symbol {s!r} not in inventory"
                )
        seen.add(utt_id)
        records.append(UtteranceRecord(utt_id, audio_path, speaker, phonemes))
    return records


def save_manifest(path: str | Path, records: list[UtteranceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(f"{r.id}\t{r.audio_path}\t{r.speaker}\t{' '.join(r.phonemes)}\n")


class AlignmentTable:
    """Utterance id -> per-phoneme durations (frames), sums matching the mels."""

    def __init__(self, durations: dict[str, list[int]]):
        self._durations = durations

    def __getitem__(self, utt_id: str) -> list[int]:
        return list(self._durations[utt_id])

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self._durations

    def __len__(self) -> int:
        return len(self._durations)

    def ids(self) -> list[str]:
        return list(self._durations)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for utt_id, durs in self._durations.items():
                f.write(utt_id + " " + " ".join(str(d) for d in durs) + "\n")


RECONCILE_TOLERANCE = 2  # frames the final phoneme may absorb


def reconcile_durations(durations: list[int], n_frames: int, utt_id: str = "?") -> list[int]:
    """Clamp zero durations and absorb a small framing mismatch in the tail.

    Zero entries are raised to 1 with a compensating decrement on the
    largest neighbor; the final phoneme absorbs up to +-2 frames so the
    sum matches the mel frame count exactly.
    """
    durs = list(durations)
    for i, d in enumerate(durs):
        if d < 0:
            raise AlignmentError(f"utterance {utt_id}: negative duration at position {i}")
        if d == 0:
            donor = max(range(len(durs)), key=lambda j: durs[j])
            if durs[donor] < 2:
                raise AlignmentError(
                    f"utterance {utt_id}: cannot repair zero duration at position {i}"
                )
            durs[donor] -= 1
            durs[i] = 1
            log.info("utterance %s: clamped zero duration at %d (donor %d)", utt_id, i, donor)
    diff = n_frames - sum(durs)
    if abs(diff) > RECONCILE_TOLERANCE:
        raise AlignmentError(
            f"utterance {utt_id}: duration sum {sum(durs)} vs {n_frames} frames "
            f"(mismatch {diff} beyond +-{RECONCILE_TOLERANCE})"
        )
    if diff != 0:
        if durs[-1] + diff < 1:
            raise AlignmentError(
                f"utterance {utt_id}: reconciliation would drop final duration below 1"
            )
        durs[-1] += diff
    return durs


def load_alignments(
    path: str | Path,
    records: list[UtteranceRecord],
    mel_frames: dict[str, int],
) -> AlignmentTable:
    """Read an alignment file and reconcile against known mel frame counts."""
    by_id = {r.id: r for r in records}
    table: dict[str, list[int]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        utt_id, dur_strs = parts[0], parts[1:]
        if utt_id not in by_id:
            raise AlignmentError(f"{path}:{lineno}: unknown utterance id {utt_id}")
        try:
            durs = [int(d) for d in dur_strs]
        except ValueError:
            raise AlignmentError(f"{path}:{lineno}: non-integer duration") from None
        expected = len(by_id[utt_id].phonemes)
        if len(durs) != expected:
            raise AlignmentError(
                f"utterance {utt_id}: {len(durs)} durations for {expected} phonemes"
            )
        if utt_id not in mel_frames:
            raise AlignmentError(f"utterance {utt_id}: no mel frame count available")
        table[utt_id] = reconcile_durations(durs, mel_frames[utt_id], utt_id)
    return AlignmentTable(table)


def split_records(
    records: list[UtteranceRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[list[UtteranceRecord], list[UtteranceRecord], list[UtteranceRecord]]:
    """Deterministic train/val/test split, disjoint by utterance id."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusValidationError("split ratios must sum to 1")
    shuffled = sorted(records, key=lambda r: r.id)
    random.Random(seed).shuffle(shuffled)
    n = len(shuffled)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    train = shuffled[:n_train]
    val = shuffled[n_train:n_train + n_val]
    test = shuffled[n_train + n_val:]
    return train, val, test
