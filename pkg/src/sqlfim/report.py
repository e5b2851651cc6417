"""Plain-text comparison table: metric rows x providers, with pp deltas."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from sqlfim.jsonl import iter_jsonl
from sqlfim.metrics import ItemScore, MetricReport, aggregate

METRIC_ROWS = (("EM", "em"), ("BLEU", "bleu"), ("CS", "containment"), ("TMS", "table_match"))
MODE_TITLES = (("single", "Single line"), ("multi", "Multi-line"))


def load_report(path: str | Path) -> MetricReport:
    """Accept either an eval report JSON or a per-item scores JSONL file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, dict) and "modes" in data:
        return MetricReport.from_dict(data)
    scores = []
    for lineno, rec in iter_jsonl(text.splitlines()):
        if not isinstance(rec, dict) or "item_id" not in rec:
            raise ValueError(f"{path}:{lineno}: not a score record")
        scores.append(ItemScore.from_record(rec))
    if not scores:
        raise ValueError(f"{path}: no scores")
    providers = {s.provider for s in scores}
    if len(providers) != 1:
        raise ValueError(f"{path}: scores from several providers: {sorted(providers)}")
    return aggregate(scores, providers.pop())


def comparison_columns(n: int, compare: bool) -> list[tuple[str, int, int | None]]:
    """Column plan: ("value", j, None) or ("delta", j, i) meaning provider j vs i."""
    cols: list[tuple[str, int, int | None]] = []
    for j in range(n):
        cols.append(("value", j, None))
        if compare:
            cols.extend(("delta", j, i) for i in range(j))
    return cols


def comparison_rows(reports: Sequence[MetricReport], compare: bool = True) -> dict:
    """Structured form of the table: {mode: {metric: [cell, ...]}} plus headers."""
    if not reports:
        raise ValueError("no reports to compare")
    fingerprints = {r.benchmark for r in reports}
    if len(fingerprints) > 1:
        raise ValueError("reports were computed on different benchmarks")
    cols = comparison_columns(len(reports), compare and len(reports) > 1)
    headers = [
        reports[j].provider if kind == "value" else f"vs {reports[i].provider}"
        for kind, j, i in cols
    ]
    table: dict = {"headers": headers, "modes": {}}
    for mode, _ in MODE_TITLES:
        rows = {}
        for label, attr in METRIC_ROWS:
            cells = []
            for kind, j, i in cols:
                vj = _value(reports[j], mode, attr)
                if kind == "value":
                    cells.append(None if vj is None else 100.0 * vj)
                else:
                    vi = _value(reports[i], mode, attr)
                    cells.append(None if vi is None or vj is None else 100.0 * (vj - vi))
            rows[label] = cells
        table["modes"][mode] = rows
    table["kinds"] = [kind for kind, _, _ in cols]
    return table


def _value(report: MetricReport, mode: str, attr: str) -> float | None:
    summary = report.modes.get(mode)
    return None if summary is None else getattr(summary, attr)


def render_table(reports: Sequence[MetricReport], compare: bool = True) -> str:
    table = comparison_rows(reports, compare)
    headers, kinds = table["headers"], table["kinds"]

    def fmt(value: float | None, kind: str) -> str:
        if value is None:
            return "n/a"
        return f"{value:.1f} %" if kind == "value" else f"{value:+.1f} pp"

    blocks = []
    for mode, title in MODE_TITLES:
        grid = [[title, *headers]]
        for label, cells in table["modes"][mode].items():
            grid.append([label, *(fmt(v, k) for v, k in zip(cells, kinds))])
        widths = [max(len(row[c]) for row in grid) for c in range(len(grid[0]))]
        lines = []
        for r, row in enumerate(grid):
            first = row[0].ljust(widths[0])
            rest = [cell.rjust(w) for cell, w in zip(row[1:], widths[1:])]
            lines.append(" | ".join([first, *rest]))
            if r == 0:
                lines.append("-+-".join("-" * w for w in widths))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
