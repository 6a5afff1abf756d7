"""Flat key-value text documents.

Used for feature/model configs and checkpoint metadata: one `key = value`
per line, `#` comments, UTF-8. Values are kept as strings here; typed
configs coerce them against their dataclass field types.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any


def dumps(pairs: dict[str, Any]) -> str:
    lines = [f"{key} = {value}" for key, value in pairs.items()]
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed key-value line: {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def write(path: str | Path, pairs: dict[str, Any]) -> None:
    Path(path).write_text(dumps(pairs), encoding="utf-8")


def read(path: str | Path) -> dict[str, str]:
    return loads(Path(path).read_text(encoding="utf-8"))


def coerce(value: str, target_type: Any) -> Any:
    if target_type is bool:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if target_type in (int, float, str):
        return target_type(value)
    raise ValueError(f"unsupported config field type: {target_type}")


def dataclass_to_kv(obj: Any) -> dict[str, Any]:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def dataclass_from_kv(cls: type, pairs: dict[str, str], strict: bool = True) -> Any:
    """Build a flat dataclass from string pairs, coercing field types.

    Unknown keys raise when strict; missing keys fall back to defaults.
    """
    field_types = {f.name: f.type for f in dataclasses.fields(cls)}
    resolved = {}
    for f in dataclasses.fields(cls):
        t = f.type
        if isinstance(t, str):
            t = {"int": int, "float": float, "str": str, "bool": bool}.get(t, str)
        resolved[f.name] = t
    kwargs = {}
    for key, value in pairs.items():
        if key not in field_types:
            if strict:
                raise ValueError(f"unknown config key: {key}")
            continue
        kwargs[key] = coerce(value, resolved[key])
    return cls(**kwargs)
