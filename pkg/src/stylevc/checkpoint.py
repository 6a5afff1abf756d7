"""Checkpoint directory layout shared by the recognizer and the generator.

A checkpoint is a directory:
    meta.txt    - format tag, model kind, training step
    config.txt  - flat key-value model config
    params.pt   - torch state dict
    inventory.txt / inventory_hash.txt
    speakers.txt (generator only) - one speaker name per line, row order
"""

from __future__ import annotations

from pathlib import Path

import torch

from . import kvdoc
from .corpus import PhonemeInventory
from .errors import InvalidInputError

FORMAT_TAG = "stylevc-checkpoint-v1"


def save_dir(
    path: str | Path,
    kind: str,
    state_dict: dict,
    config_kv: dict,
    inventory: PhonemeInventory,
    step: int,
    speakers: list[str] | None = None,
) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    kvdoc.write(path / "meta.txt", {"format": FORMAT_TAG, "kind": kind, "step": step})
    kvdoc.write(path / "config.txt", config_kv)
    torch.save(state_dict, path / "params.pt")
    inventory.save(path / "inventory.txt")
    (path / "inventory_hash.txt").write_text(inventory.content_hash() + "\n")
    if speakers is not None:
        (path / "speakers.txt").write_text("".join(s + "\n" for s in speakers))


def load_dir(
    path: str | Path, kind: str, inventory: PhonemeInventory | None = None
) -> tuple[dict, dict, PhonemeInventory, int, list[str] | None]:
    """Returns (state_dict, config_kv, inventory, step, speakers)."""
    path = Path(path)
    meta = kvdoc.read(path / "meta.txt")
    if meta.get("format") != FORMAT_TAG:
        raise InvalidInputError(f"{path}: unknown checkpoint format {meta.get('format')!r}")
    if meta.get("kind") != kind:
        raise InvalidInputError(f"{path}: checkpoint kind {meta.get('kind')!r}, expected {kind!r}")
    stored_hash = (path / "inventory_hash.txt").read_text().strip()
    embedded = PhonemeInventory.load(path / "inventory.txt")
    if embedded.content_hash() != stored_hash:
        raise InvalidInputError(f"{path}: inventory hash mismatch in checkpoint")
    if inventory is not None and inventory.content_hash() != stored_hash:
        raise InvalidInputError(f"{path}: checkpoint was trained with a different inventory")
    state_dict = torch.load(path / "params.pt", weights_only=True)
    config_kv = kvdoc.read(path / "config.txt")
    speakers = None
    speakers_file = path / "speakers.txt"
    if speakers_file.exists():
        speakers = [s for s in speakers_file.read_text().splitlines() if s]
    return state_dict, config_kv, embedded, int(meta["step"]), speakers
