"""Synthetic fixtures: a SQL corpus spanning every complexity x length cell,
planted duplicates, and telemetry logs with prescribed metric values."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from sqlfim.corpus import query_id
from sqlfim.jsonl import make_rng
from sqlfim.lexer import TokenKind, tokenize
from sqlfim.telemetry import EventKind, TelemetryEvent, parse_iso_week

TABLES = [
    "dm_session_info", "fct_daily_events", "dim_users", "ads.fct_impressions",
    "infra.host_metrics", "dim_accounts", "fct_query_runs", "growth.dau_rollup",
    "ml.feature_store", "fct_payments", "dim_regions", "logs.request_log",
]
COLUMNS = [
    "ds", "user_id", "session_num", "country", "final_authoring_time",
    "final_execution_time", "event_type", "revenue", "device", "app_version",
    "latency_ms", "region", "account_id", "is_employee", "num_queries",
    "surface", "experiment_group", "platform",
]
CONDITIONS = [
    "ds = '2024-01-01'", "country IN ('US', 'CA')", "latency_ms > 200",
    "is_employee = 0", "event_type LIKE 'click%'", "revenue BETWEEN 1 AND 100",
    "NOT device = 'bot'", "platform <> 'web'", "user_id IS NOT NULL",
]
AGGREGATES = ["COUNT(*)", "SUM(revenue)", "AVG(latency_ms)", "MAX(ds)", "COUNT(DISTINCT user_id)"]

COMPLEXITIES = ("easy", "medium", "hard", "extra_hard")


def _choice(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def _sample(rng: np.random.Generator, seq, k: int) -> list:
    return [seq[i] for i in rng.choice(len(seq), size=min(k, len(seq)), replace=False)]


def make_query(rng: np.random.Generator, complexity: str, size: int) -> str:
    """One multi-line query whose highest keyword tier is ``complexity``.

    ``size`` scales the column and predicate counts independently of the
    complexity, so every length tertile can be reached at every level.
    """
    cols = _sample(rng, COLUMNS, 1 + size)
    conds = _sample(rng, CONDITIONS, min(size // 2, len(CONDITIONS)))
    table = _choice(rng, TABLES)
    extra_from: list[str] = []
    tail: list[str] = []
    head: list[str] = []

    if complexity == "medium":
        variant = int(rng.integers(3))
        if variant == 0:
            other = _choice(rng, [t for t in TABLES if t != table])
            extra_from.append(f"JOIN {other} b ON a.user_id = b.user_id")
        elif variant == 1:
            cols = cols[: max(1, len(cols) - 1)] + [_choice(rng, AGGREGATES)]
            tail.append("GROUP BY " + ", ".join(str(i + 1) for i in range(len(cols) - 1)))
        else:
            tail.append(f"ORDER BY {cols[0]}")
    elif complexity == "hard":
        if rng.integers(2):
            tail.append(f"LIMIT {int(rng.integers(1, 1000))}")
        else:
            other = _choice(rng, TABLES)
            cols = cols[: max(1, len(cols) // 2)]
            tail.append("UNION\nSELECT " + ", ".join(cols) + f"\nFROM {other}")
    elif complexity == "extra_hard":
        variant = int(rng.integers(3))
        if variant == 0:
            src = _choice(rng, TABLES)
            head.append(f"WITH base AS (\n  SELECT *\n  FROM {src}\n)")
            table = "base"
        elif variant == 1:
            cols = cols + [f"CASE WHEN {cols[0]} IS NULL THEN 0 ELSE 1 END AS flag"]
        else:
            cols = [f"COALESCE({cols[0]}, 0) AS {cols[0]}"] + cols[1:]

    lines = list(head)
    if int(rng.integers(4)) == 0:
        lines.insert(0, f"-- query {int(rng.integers(10**6))}")
    lines.append("SELECT")
    lines.append(",\n".join(f"  {c}" for c in cols))
    lines.append(f"FROM {table} a")
    lines.extend(extra_from)
    if conds:
        lines.append("WHERE " + "\n  AND ".join(conds))
    lines.extend(tail)
    return "\n".join(lines)


def synthetic_corpus(n: int, seed: int = 0, max_size: int = 14) -> list[str]:
    """``n`` distinct queries (distinct after normalization), complexities round-robin."""
    rng = make_rng(seed)
    out: list[str] = []
    seen: set[str] = set()
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 50 * n + 100:
            raise RuntimeError("could not generate enough distinct queries")
        text = make_query(rng, COMPLEXITIES[len(out) % 4], int(rng.integers(max_size + 1)))
        qid = query_id(text)
        if qid in seen:
            continue
        seen.add(qid)
        out.append(text)
    return out


def respell(text: str, rng: np.random.Generator) -> str:
    """A normalization-equivalent rewrite: doubled whitespace, a comment, keyword case."""
    parts = ["/* copy */ "]
    for tok in tokenize(text):
        if tok.kind is TokenKind.WHITESPACE:
            parts.append(tok.lexeme * 2)
        elif tok.kind is TokenKind.KEYWORD and rng.integers(2):
            parts.append(tok.lexeme.lower())
        else:
            parts.append(tok.lexeme)
    return "".join(parts) + "\n"


def plant_duplicates(texts: list[str], fraction: float, seed: int = 0) -> tuple[list[str], int]:
    """Insert ``round(fraction * total)`` respelled copies; return (corpus, planted).

    Every copy lands somewhere after its source, so first-occurrence dedup
    keeps exactly the original corpus in its original order.
    """
    rng = make_rng(seed)
    # planted / (len + planted) == fraction
    planted = round(fraction * len(texts) / (1 - fraction))
    sources = rng.choice(len(texts), size=planted, replace=False)
    keyed = [((float(i), 0), t) for i, t in enumerate(texts)]
    for src in sources:
        src = int(src)
        key = src + float(rng.uniform(0.0, 1.0)) * (len(texts) - src)
        keyed.append(((max(key, src + 1e-9), 1), respell(texts[src], rng)))
    keyed.sort(key=lambda kv: kv[0])
    return [t for _, t in keyed], planted


def _frac(x) -> Fraction:
    return Fraction(str(x)).limit_denominator(100_000)


def telemetry_fixture(
    acceptance: float = 0.21,
    cpo: float = 2.2,
    retention: float = 0.8,
    opt_out: float = 0.003,
    population: int = 1000,
    week: str = "2024-W02",
    seed: int = 0,
    short_display: int = 7,
) -> tuple[list[TelemetryEvent], dict]:
    """Events engineered so the telemetry metrics equal the given targets exactly.

    ``short_display`` extra suggestions are shown for under 750 ms (some of
    them accepted) to exercise the display filter.
    """
    rng = make_rng(seed)
    acc, cpo_f, ret, opt = _frac(acceptance), _frac(cpo), _frac(retention), _frac(opt_out)
    opted = opt * population
    if opted.denominator != 1:
        raise ValueError(f"opt-out rate {opt_out} x population {population} is not a whole number of users")
    if not 0 < ret <= 1 or not 0 < acc <= 1:
        raise ValueError("acceptance and retention must lie in (0, 1]")

    # Week-W active users: ret.denominator of them, ret.numerator also active in W-1.
    cur_n, both_n = ret.denominator, ret.numerator
    # Qualifying suggestions: shown = acc.denominator * m, accepted = acc.numerator * m,
    # enough acceptances for one per (user, week) slot.
    slots = cur_n + both_n
    m = -(-slots // acc.numerator)
    shown_n, accepted_n = acc.denominator * m, acc.numerator * m
    short_accepted = short_display // 2
    total_accepted = accepted_n + short_accepted

    # CPO: chars / opportunities == cpo_f, every acceptance carrying >= 1 char.
    scale = -(-total_accepted // max(cpo_f.numerator, 1))
    chars = cpo_f.numerator * scale
    opportunities = cpo_f.denominator * scale
    if chars < total_accepted:
        raise ValueError("cpo target too small for the number of acceptances")

    w_start, _ = parse_iso_week(week)
    prev_start = w_start - 7 * 86_400_000
    users = [f"u{i:04d}" for i in range(cur_n)]
    both = set(users[:both_n])
    if population < len(users) + int(opted) + 1:
        raise ValueError("population too small for the fixture")

    slots_list = [(u, w_start) for u in users] + [(u, prev_start) for u in users if u in both]
    extra = accepted_n - len(slots_list)
    slots_list += [(users[0], w_start)] * extra
    char_lens = [1] * total_accepted
    for i in range(chars - total_accepted):
        char_lens[i % total_accepted] += 1

    events: list[TelemetryEvent] = []
    sid = 0

    def at(base: int) -> int:
        return base + int(rng.integers(0, 6 * 86_400_000))

    for _ in range(opportunities):
        events.append(TelemetryEvent(EventKind.OPPORTUNITY, _choice(rng, users), at(w_start)))
    for i, (user, base) in enumerate(slots_list):
        ts = at(base)
        events.append(TelemetryEvent(EventKind.SHOWN, user, ts, f"s{sid}", int(rng.integers(750, 5000))))
        events.append(TelemetryEvent(EventKind.ACCEPTED, user, ts + 1000, f"s{sid}", char_len=char_lens[i]))
        sid += 1
    for _ in range(shown_n - accepted_n):
        user, ts = _choice(rng, users), at(w_start)
        events.append(TelemetryEvent(EventKind.SHOWN, user, ts, f"s{sid}", int(rng.integers(750, 5000))))
        events.append(TelemetryEvent(EventKind.REJECTED, user, ts + 1000, f"s{sid}"))
        sid += 1
    for i in range(short_display):
        user, ts = _choice(rng, users), at(w_start)
        events.append(TelemetryEvent(EventKind.SHOWN, user, ts, f"s{sid}", int(rng.integers(0, 750))))
        if i < short_accepted:
            events.append(TelemetryEvent(EventKind.ACCEPTED, user, ts + 500, f"s{sid}",
                                         char_len=char_lens[accepted_n + i]))
        sid += 1
    # Opt-outs go to users outside the active set; one more opts out and back in.
    for i in range(int(opted) + 1):
        user = f"opt{i:04d}"
        ts = at(w_start)
        events.append(TelemetryEvent(EventKind.OPT_OUT, user, ts))
        if i == int(opted):
            events.append(TelemetryEvent(EventKind.OPT_IN, user, ts + 60_000))

    order = rng.permutation(len(events))
    events = [events[i] for i in order]
    targets = {
        "acceptance": float(acc), "cpo": float(cpo_f), "retention": float(ret),
        "opt_out": float(opt), "population": population, "week": week,
    }
    return events, targets

