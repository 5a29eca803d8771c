"""``key = value`` text files for dataclass configurations."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, fields

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(kind: str, raw: str, key: str, lineno: int):
    try:
        if kind == "bool":
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"line {lineno}: {key} expects {kind}, got {raw!r}") from None


def parse_key_values(cls, text: str):
    """Build ``cls`` from ``key = value`` lines; ``#`` starts a comment.

    Unknown keys and unparsable values raise ``ValueError`` naming the line.
    """
    kinds = {f.name: str(f.type) for f in fields(cls)}
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        kwargs[key] = _convert(kinds[key], value, key, lineno)
    return cls(**kwargs)


def read_config(cls, path):
    with open(path, encoding="utf-8") as fh:
        return parse_key_values(cls, fh.read())


def format_key_values(config) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(config).items())


def stable_hash(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
