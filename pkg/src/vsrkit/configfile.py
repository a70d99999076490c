"""Flat key-value config files: UTF-8 text, ``key = value`` lines, ``#`` comments."""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def load_config(path) -> "dict[str, str]":
    """Read a config file into an ordered key -> raw-string mapping."""
    text = Path(path).read_text(encoding="utf-8")
    out: dict[str, str] = {}
    problems = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        out[key.strip().replace("-", "_")] = value.strip()
    if problems:
        raise ConfigError([f"{path}: {p}" for p in problems])
    return out


def parse_bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ConfigError([f"{key}: expected a boolean, got {value!r}"])


def dump_config(values: "dict[str, object]") -> str:
    lines = [f"{k} = {v}" for k, v in values.items()]
    return "\n".join(lines) + "\n"
