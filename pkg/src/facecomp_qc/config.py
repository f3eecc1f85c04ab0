"""Flat key-value run configuration.

Grammar: one ``key = value`` pair per line; blank lines and lines starting
with ``#`` are ignored; keys are dot-namespaced; values are uninterpreted
strings until a command reads them. Precedence is CLI flag over config
file over built-in default, and every command persists its fully resolved
configuration next to its outputs before writing anything else.
"""

from __future__ import annotations

import os
from pathlib import Path

ENV_CONFIG = "FACECOMP_QC_CONFIG"


def read_config(path) -> dict[str, str]:
    cfg: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        cfg[key.strip()] = value.strip()
    return cfg


def default_config_path() -> str | None:
    return os.environ.get(ENV_CONFIG) or None


def write_config(path, cfg: dict[str, str]) -> None:
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_quality_list(text: str) -> tuple[int, ...]:
    """Parse a quality grid: 'a..b/s' (inclusive range), 'q1,q2,...' or 'none'."""
    text = text.strip()
    if not text or text.lower() == "none":
        return ()
    if ".." in text:
        lo_part, _, rest = text.partition("..")
        hi_part, _, step_part = rest.partition("/")
        step = int(step_part) if step_part else 1
        return tuple(range(int(lo_part), int(hi_part) + 1, step))
    return tuple(int(v) for v in text.split(","))


def format_quality_list(values: tuple[int, ...]) -> str:
    if not values:
        return "none"
    if len(values) > 2:
        step = values[1] - values[0]
        if step > 0 and values == tuple(range(values[0], values[-1] + 1, step)):
            return f"{values[0]}..{values[-1]}/{step}"
    return ",".join(str(v) for v in values)
