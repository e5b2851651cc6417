"""Corpus ingestion and the quality pipeline: length filters, dedup, balancing."""

from __future__ import annotations

import hashlib
import logging
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from sqlfim.jsonl import iter_jsonl, make_rng
from sqlfim.lexer import (
    Complexity,
    LexError,
    TokenKind,
    nonspace_length,
    profile_query,
    tokenize,
)

log = logging.getLogger(__name__)


class LengthCategory(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


CELLS: list[tuple[Complexity, LengthCategory]] = [
    (c, l) for c in Complexity for l in LengthCategory
]


def cell_key(complexity: Complexity, length: LengthCategory) -> str:
    return f"{complexity.label}/{length.value}"


def normalize_sql(text: str) -> str:
    """Canonical text used for ids and exact dedup.

    Comments are dropped, every whitespace run (including one left by a
    removed comment) becomes a single space, and keywords are lower-cased.
    Text that does not lex falls back to whitespace collapsing only.
    """
    try:
        tokens = tokenize(text)
    except LexError:
        return " ".join(text.split())
    parts: list[str] = []
    gap = False
    for tok in tokens:
        if not tok.significant:
            gap = True
            continue
        if gap and parts:
            parts.append(" ")
        gap = False
        parts.append(tok.keyword.lower() if tok.kind is TokenKind.KEYWORD else tok.lexeme)
    return "".join(parts)


def query_id(text: str) -> str:
    return hashlib.sha256(normalize_sql(text).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SqlQuery:
    id: str
    text: str
    dialect: str = "presto"
    origin_path: str = ""
    kernel_name: str = ""
    # Set by balance(); carried through the corpus file to the benchmark generator.
    complexity: str | None = None
    length_category: str | None = None

    @classmethod
    def from_text(cls, text: str, **meta) -> "SqlQuery":
        return cls(id=query_id(text), text=text, **meta)

    def to_record(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class StageReport:
    name: str
    input: int
    output: int = 0
    rejected: dict[str, int] = field(default_factory=dict)

    def reject(self, reason: str) -> None:
        self.rejected[reason] = self.rejected.get(reason, 0) + 1


@dataclass
class CorpusStats:
    stages: list[StageReport] = field(default_factory=list)
    tertile_boundaries: tuple[int, int] | None = None
    per_cell_counts: dict[str, int] = field(default_factory=dict)
    selected_cell_counts: dict[str, int] = field(default_factory=dict)
    underfilled_cells: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.stages[0].input if self.stages else 0

    @property
    def rejected_by_filter(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for stage in self.stages:
            for reason, n in stage.rejected.items():
                out[reason] = out.get(reason, 0) + n
        return out

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "rejected_by_filter": self.rejected_by_filter,
            "stages": [asdict(s) for s in self.stages],
            "tertile_boundaries": list(self.tertile_boundaries) if self.tertile_boundaries else None,
            "per_cell_counts": self.per_cell_counts,
            "selected_cell_counts": self.selected_cell_counts,
            "underfilled_cells": self.underfilled_cells,
        }


_OPTIONAL_FIELDS = ("dialect", "origin_path", "kernel_name", "complexity", "length_category")


def ingest(source: Iterable, format: str = "jsonl") -> tuple[list[SqlQuery], StageReport]:
    """Read queries from JSONL lines (``format="jsonl"``) or file paths (``"sql-files"``)."""
    queries: list[SqlQuery] = []
    if format == "jsonl":
        report = StageReport("ingest", input=0)
        for lineno, value in iter_jsonl(source):
            report.input += 1
            text = value.get("text") if isinstance(value, dict) else None
            if not isinstance(text, str):
                log.warning("line %d: malformed corpus record, skipped", lineno)
                report.reject("parse")
                continue
            meta = {k: value[k] for k in _OPTIONAL_FIELDS if isinstance(value.get(k), str)}
            queries.append(SqlQuery.from_text(text, **meta))
    elif format == "sql-files":
        paths = [Path(p) for p in source]
        report = StageReport("ingest", input=len(paths))
        for path in paths:
            try:
                text = path.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                log.warning("%s: unreadable (%s), skipped", path, exc)
                report.reject("parse")
                continue
            queries.append(SqlQuery.from_text(text, origin_path=str(path)))
    else:
        raise ValueError(f"unknown corpus format: {format!r}")
    report.output = len(queries)
    return queries, report


def filter_quality(
    queries: Sequence[SqlQuery],
    min_len: int = 0,
    max_len: int | None = None,
    require_lexable: bool = True,
) -> tuple[list[SqlQuery], StageReport]:
    """Keep queries whose non-whitespace length lies in ``[min_len, max_len]``."""
    if max_len is not None and min_len > max_len:
        raise ValueError(f"min_len {min_len} exceeds max_len {max_len}")
    report = StageReport("filter_quality", input=len(queries))
    kept = []
    for q in queries:
        n = nonspace_length(q.text)
        if n < min_len:
            report.reject("too_short")
            continue
        if max_len is not None and n > max_len:
            report.reject("too_long")
            continue
        if require_lexable:
            try:
                tokenize(q.text)
            except LexError:
                report.reject("unlexable")
                continue
        kept.append(q)
    report.output = len(kept)
    return kept, report


def shingles(text: str, size: int = 5) -> frozenset[tuple[str, ...]]:
    try:
        toks = tuple(
            t.keyword.lower() if t.kind is TokenKind.KEYWORD else t.lexeme
            for t in tokenize(text)
            if t.significant
        )
    except LexError:
        toks = tuple(text.split())
    if len(toks) <= size:
        return frozenset({toks})
    return frozenset(toks[i:i + size] for i in range(len(toks) - size + 1))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def dedup(
    queries: Sequence[SqlQuery],
    near: bool = False,
    threshold: float = 0.9,
    shingle_size: int = 5,
) -> tuple[list[SqlQuery], StageReport]:
    """Drop later copies of a normalized-identical query; optionally near-duplicates too.

    Near-duplicate detection compares token shingles of the query by
    exact Jaccard similarity against every earlier survivor sharing a shingle.
    """
    report = StageReport("dedup", input=len(queries))
    seen: set[str] = set()
    kept: list[SqlQuery] = []
    index: dict[tuple[str, ...], list[int]] = defaultdict(list)
    kept_shingles: list[frozenset] = []
    for q in queries:
        if q.id in seen:
            report.reject("exact_duplicate")
            continue
        if near:
            sh = shingles(q.text, shingle_size)
            candidates = {k for s in sh for k in index.get(s, ())}
            if any(jaccard(sh, kept_shingles[k]) >= threshold for k in sorted(candidates)):
                report.reject("near_duplicate")
                continue
            for s in sh:
                index[s].append(len(kept))
            kept_shingles.append(sh)
        seen.add(q.id)
        kept.append(q)
    report.output = len(kept)
    return kept, report


def length_tertiles(lengths: Sequence[int]) -> tuple[int, int]:
    """Nearest-rank 1/3 and 2/3 quantiles of ``lengths``."""
    n = len(lengths)
    if n < 3:
        raise ValueError(f"need at least 3 queries for tertiles, got {n}")
    ordered = sorted(lengths)
    # ceil(k*n/3) in integer arithmetic
    return ordered[-(-n // 3) - 1], ordered[-(-2 * n // 3) - 1]


def length_category(length: int, boundaries: tuple[int, int]) -> LengthCategory:
    b1, b2 = boundaries
    if length <= b1:
        return LengthCategory.SMALL
    if length <= b2:
        return LengthCategory.MEDIUM
    return LengthCategory.LARGE


def corpus_tertiles(queries: Sequence[SqlQuery]) -> tuple[int, int]:
    return length_tertiles([nonspace_length(q.text) for q in queries])


def label_cells(
    queries: Sequence[SqlQuery], boundaries: tuple[int, int] | None = None
) -> tuple[list[SqlQuery], tuple[int, int]]:
    """Attach complexity and length labels; unlexable queries are dropped."""
    lexable = []
    for q in queries:
        try:
            lexable.append((q, profile_query(q.text)))
        except LexError:
            log.warning("query %s does not lex; not labelled", q.id)
    if boundaries is None:
        boundaries = length_tertiles([p.char_length for _, p in lexable])
    labelled = [
        replace(
            q,
            complexity=p.complexity.label,
            length_category=length_category(p.char_length, boundaries).value,
        )
        for q, p in lexable
    ]
    return labelled, boundaries


def group_cells(queries: Iterable[SqlQuery]) -> dict[str, list[SqlQuery]]:
    groups: dict[str, list[SqlQuery]] = {cell_key(c, l): [] for c, l in CELLS}
    for q in queries:
        groups[f"{q.complexity}/{q.length_category}"].append(q)
    return groups


def balance(
    queries: Sequence[SqlQuery], cell_target: int, seed: int, stats: CorpusStats | None = None
) -> list[SqlQuery]:
    """Sample up to ``cell_target`` queries from each complexity x length cell.

    Queries must already carry labels (see :func:`label_cells`).  Each cell
    draws from its own PCG64 sub-stream of ``seed``, so the selection does
    not depend on the contents of other cells.
    """
    if cell_target < 1:
        raise ValueError("cell_target must be >= 1")
    groups = group_cells(queries)
    selected: list[SqlQuery] = []
    for idx, (key, members) in enumerate(groups.items()):
        rng = make_rng(seed, idx)
        take = min(cell_target, len(members))
        picks = rng.permutation(len(members))[:take]
        selected.extend(members[i] for i in picks)
        if stats is not None:
            stats.per_cell_counts[key] = len(members)
            stats.selected_cell_counts[key] = take
            if take < cell_target:
                stats.underfilled_cells.append(key)
        if take < cell_target:
            log.warning("cell %s under-filled: %d of %d", key, take, cell_target)
    return selected


def curate(
    lines: Iterable,
    format: str = "jsonl",
    min_len: int = 0,
    max_len: int | None = None,
    near_dedup: bool = False,
    cell_target: int | None = None,
    seed: int = 0,
) -> tuple[list[SqlQuery], CorpusStats]:
    """Full pipeline: ingest, filter, dedup, label, and (optionally) balance."""
    stats = CorpusStats()
    queries, rep = ingest(lines, format)
    stats.stages.append(rep)
    queries, rep = filter_quality(queries, min_len, max_len, require_lexable=True)
    stats.stages.append(rep)
    queries, rep = dedup(queries, near=near_dedup)
    stats.stages.append(rep)
    queries, stats.tertile_boundaries = label_cells(queries)
    if cell_target is not None:
        rep = StageReport("balance", input=len(queries))
        queries = balance(queries, cell_target, seed, stats)
        rep.output = len(queries)
        rep.rejected["not_sampled"] = rep.input - rep.output
        stats.stages.append(rep)
    else:
        stats.per_cell_counts = {k: len(v) for k, v in group_cells(queries).items()}
    return queries, stats


def load_corpus(path: str | Path) -> list[SqlQuery]:
    with open(path, encoding="utf-8") as fh:
        queries, rep = ingest(fh, "jsonl")
    if rep.rejected:
        raise ValueError(f"{path}: {sum(rep.rejected.values())} malformed corpus records")
    return queries

