"""Benchmark generation: cut balanced queries into (prefix, target, suffix) items."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from sqlfim.corpus import SqlQuery, group_cells
from sqlfim.jsonl import make_rng
from sqlfim.lexer import TokenKind, tokenize

log = logging.getLogger(__name__)

CUT_TRIGGERS = frozenset(",(")
_OPAQUE = (TokenKind.COMMENT, TokenKind.STRING_LITERAL, TokenKind.QUOTED_IDENTIFIER)


class Mode(str, Enum):
    SINGLE = "single"
    MULTI = "multi"


class CutError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    prefix: str
    target: str
    suffix: str
    mode: Mode
    complexity: str
    length_category: str
    source_query_id: str

    @property
    def text(self) -> str:
        return self.prefix + self.target + self.suffix

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["mode"] = self.mode.value
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "BenchmarkItem":
        fields = dict(rec)
        fields["mode"] = Mode(fields["mode"])
        return cls(**{k: fields[k] for k in cls.__dataclass_fields__})


def cut_points(text: str) -> list[int]:
    """Offsets just after whitespace, ``,`` or ``(`` outside comments and literals."""
    points = set()
    for tok in tokenize(text):
        if tok.kind in _OPAQUE:
            continue
        for i, ch in enumerate(tok.lexeme):
            if ch.isspace() or ch in CUT_TRIGGERS:
                points.add(tok.start + i + 1)
    points.discard(0)
    points.discard(len(text))
    if not points:
        raise CutError("query has no cut point")
    return sorted(points)


def _pick(rng: np.random.Generator, options: Sequence[int]) -> int:
    return options[int(rng.integers(len(options)))]


def cut_query(
    query: SqlQuery,
    mode: Mode,
    rng: np.random.Generator,
    max_retries: int = 32,
) -> BenchmarkItem:
    """Cut one item from ``query``.

    The start is a uniformly chosen cut point.  A single-line target runs to
    the end of that line; a multi-line target ends at a later cut point (or
    the end of text) on a subsequent line.  Starts that give a blank target
    are redrawn up to ``max_retries`` times.
    """
    text = query.text
    points = cut_points(text)
    if mode is Mode.MULTI and "\n" not in text:
        raise CutError("multi-line item requested from a one-line query")
    for _ in range(max_retries):
        start = _pick(rng, points)
        if mode is Mode.SINGLE:
            nl = text.find("\n", start)
            end = len(text) if nl < 0 else nl
        else:
            first_nl = text.find("\n", start)
            if first_nl < 0:
                continue
            ends = [p for p in points if p > first_nl]
            ends.append(len(text))
            end = _pick(rng, ends)
        if text[start:end].strip():
            break
    else:
        raise CutError(f"no usable {mode.value}-line cut after {max_retries} draws")
    return BenchmarkItem(
        id=f"{query.id}:{mode.value}",
        prefix=text[:start],
        target=text[start:end],
        suffix=text[end:],
        mode=mode,
        complexity=query.complexity or "",
        length_category=query.length_category or "",
        source_query_id=query.id,
    )


@dataclass
class BenchStats:
    requested_per_cell: int
    cell_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    underfilled: list[str] = field(default_factory=list)
    unusable_queries: int = 0

    @property
    def spread(self) -> int:
        counts = [n for per_mode in self.cell_counts.values() for n in per_mode.values()]
        return max(counts) - min(counts) if counts else 0

    def to_dict(self) -> dict:
        return {**asdict(self), "spread": self.spread}


def generate(
    queries: Sequence[SqlQuery],
    items_per_cell_per_mode: int,
    seed: int,
    modes: Sequence[Mode] = (Mode.SINGLE, Mode.MULTI),
) -> tuple[list[BenchmarkItem], BenchStats]:
    """Build a benchmark from a labelled (usually balanced) corpus.

    Every (mode, cell) pair gets its own PCG64 sub-stream, visits its queries
    in a seeded random order and keeps the first ``items_per_cell_per_mode``
    that yield a valid cut.  Items are returned sorted by id.
    """
    stats = BenchStats(items_per_cell_per_mode)
    groups = group_cells(queries)
    items: list[BenchmarkItem] = []
    unusable: set[str] = set()
    for mode in modes:
        mode_idx = list(Mode).index(mode)
        for cell_idx, (key, members) in enumerate(groups.items()):
            rng = make_rng(seed, mode_idx, cell_idx)
            got = 0
            for i in rng.permutation(len(members)):
                if got == items_per_cell_per_mode:
                    break
                try:
                    items.append(cut_query(members[i], mode, rng))
                except (CutError, ValueError):
                    unusable.add(members[i].id)
                    continue
                got += 1
            stats.cell_counts.setdefault(key, {})[mode.value] = got
            if got < items_per_cell_per_mode:
                stats.underfilled.append(f"{key}/{mode.value}")
    if stats.underfilled:
        log.warning("under-filled benchmark cells: %s", ", ".join(stats.underfilled))
    stats.unusable_queries = len(unusable)
    items.sort(key=lambda it: it.id)
    return items, stats
