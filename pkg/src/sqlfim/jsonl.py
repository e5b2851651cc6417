"""JSONL reading/writing shared by every pipeline stage.

Artifacts written by the CLI start with one header record ``{"_meta": {...}}``
holding the tool version and effective configuration; readers skip it.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from sqlfim import __version__

log = logging.getLogger(__name__)

META_KEY = "_meta"


def dumps(record: Any) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def meta_record(config: dict | None) -> dict:
    return {META_KEY: {"tool": "sqlfim", "version": __version__, "config": config or {}}}


def write_jsonl(path: str | Path, records: Iterable[dict], config: dict | None = None) -> int:
    """Write records (after a meta header when ``config`` is given); return the count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if config is not None:
            fh.write(dumps(meta_record(config)) + "\n")
        for rec in records:
            fh.write(dumps(rec) + "\n")
            n += 1
    return n


def iter_jsonl(lines: Iterable[str]) -> Iterator[tuple[int, Any]]:
    """Yield ``(line_number, value)``; ``value`` is the exception for malformed lines."""
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            value = json.loads(line)
        except json.JSONDecodeError as exc:
            yield lineno, exc
            continue
        if isinstance(value, dict) and META_KEY in value:
            continue
        yield lineno, value


def read_jsonl(path: str | Path) -> list[dict]:
    """Strict reader for toolkit-produced files: any malformed line raises."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, value in iter_jsonl(fh):
            if isinstance(value, Exception) or not isinstance(value, dict):
                raise ValueError(f"{path}:{lineno}: malformed record")
            out.append(value)
    return out


def read_meta(path: str | Path) -> dict | None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        value = json.loads(first)
    except json.JSONDecodeError:
        return None
    return value.get(META_KEY) if isinstance(value, dict) else None


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed``; ``stream`` derives independent sub-streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))
