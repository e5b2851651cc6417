"""Deployment metrics over a suggestion-event log.

Event JSONL record::

    {"kind": "Shown", "user_id": "u1", "ts_ms": 1704700800000,
     "suggestion_id": "s1", "display_ms": 900}

Kinds: Opportunity, Shown, Accepted, Rejected, OptOut, OptIn, TypedChars.
Days and ISO weeks are aligned to UTC.
"""

from __future__ import annotations

import datetime as dt
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from sqlfim.jsonl import iter_jsonl

log = logging.getLogger(__name__)

DEFAULT_MIN_DISPLAY_MS = 750


class EventKind(str, Enum):
    OPPORTUNITY = "Opportunity"
    SHOWN = "Shown"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    OPT_OUT = "OptOut"
    OPT_IN = "OptIn"
    TYPED_CHARS = "TypedChars"


_KIND_ORDER = {k: i for i, k in enumerate(EventKind)}


@dataclass(frozen=True)
class TelemetryEvent:
    kind: EventKind
    user_id: str
    ts_ms: int
    suggestion_id: str | None = None
    display_ms: int | None = None
    char_len: int | None = None

    def __post_init__(self):
        if self.display_ms is not None and self.display_ms < 0:
            raise ValueError("display_ms must be >= 0")
        if self.char_len is not None and self.char_len < 0:
            raise ValueError("char_len must be >= 0")

    def sort_key(self) -> tuple:
        return (self.ts_ms, self.user_id, _KIND_ORDER[self.kind], self.suggestion_id or "",
                self.display_ms or 0, self.char_len or 0)

    def to_record(self) -> dict:
        rec = {"kind": self.kind.value, "user_id": self.user_id, "ts_ms": self.ts_ms}
        for key in ("suggestion_id", "display_ms", "char_len"):
            if getattr(self, key) is not None:
                rec[key] = getattr(self, key)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "TelemetryEvent":
        return cls(
            kind=EventKind(rec["kind"]),
            user_id=str(rec["user_id"]),
            ts_ms=int(rec["ts_ms"]),
            suggestion_id=rec.get("suggestion_id"),
            display_ms=rec.get("display_ms"),
            char_len=rec.get("char_len"),
        )


def load_events(lines: Iterable[str]) -> list[TelemetryEvent]:
    events = []
    for lineno, rec in iter_jsonl(lines):
        try:
            events.append(TelemetryEvent.from_record(rec))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValueError(f"line {lineno}: malformed event ({exc})") from None
    return sort_events(events)


def sort_events(events: Iterable[TelemetryEvent]) -> list[TelemetryEvent]:
    return sorted(events, key=TelemetryEvent.sort_key)


def acceptance_rate(events: Iterable[TelemetryEvent], min_display_ms: int = DEFAULT_MIN_DISPLAY_MS) -> float | None:
    """Accepted / shown, counting only suggestions displayed at least ``min_display_ms``."""
    shown: set[tuple[str, str]] = set()
    accepted: set[tuple[str, str]] = set()
    for ev in sort_events(events):
        key = (ev.user_id, ev.suggestion_id or "")
        if ev.kind is EventKind.SHOWN and (ev.display_ms or 0) >= min_display_ms:
            shown.add(key)
        elif ev.kind is EventKind.ACCEPTED and key in shown:
            accepted.add(key)
    if not shown:
        return None
    return len(accepted) / len(shown)


def cpo(events: Iterable[TelemetryEvent]) -> float | None:
    """Characters accepted per opportunity."""
    chars = 0
    opportunities = 0
    for ev in events:
        if ev.kind is EventKind.OPPORTUNITY:
            opportunities += 1
        elif ev.kind is EventKind.ACCEPTED:
            chars += ev.char_len or 0
    if not opportunities:
        return None
    return chars / opportunities


def typed_share(events: Iterable[TelemetryEvent]) -> float | None:
    """Accepted characters as a share of all characters authored (needs TypedChars events)."""
    accepted = typed = 0
    seen_typed = False
    for ev in events:
        if ev.kind is EventKind.ACCEPTED:
            accepted += ev.char_len or 0
        elif ev.kind is EventKind.TYPED_CHARS:
            seen_typed = True
            typed += ev.char_len or 0
    if not seen_typed or accepted + typed == 0:
        return None
    return accepted / (accepted + typed)


def _utc(ts_ms: int) -> dt.datetime:
    return dt.datetime.fromtimestamp(ts_ms / 1000.0, tz=dt.timezone.utc)


def _ms(moment: dt.datetime) -> int:
    return int(moment.timestamp() * 1000)


def window_bounds(window: str, at_ms: int) -> tuple[int, int]:
    """[start, end) of the UTC day or ISO week containing ``at_ms``."""
    moment = _utc(at_ms)
    day = dt.datetime(moment.year, moment.month, moment.day, tzinfo=dt.timezone.utc)
    if window == "day":
        return _ms(day), _ms(day + dt.timedelta(days=1))
    if window == "week":
        start = day - dt.timedelta(days=day.weekday())
        return _ms(start), _ms(start + dt.timedelta(days=7))
    raise ValueError(f"window must be 'day' or 'week', got {window!r}")


def parse_iso_week(week: str) -> tuple[int, int]:
    """``"2024-W02"`` -> [start, end) epoch milliseconds."""
    year, _, num = week.upper().partition("-W")
    start = dt.datetime.combine(
        dt.date.fromisocalendar(int(year), int(num), 1), dt.time(), tzinfo=dt.timezone.utc
    )
    return _ms(start), _ms(start + dt.timedelta(days=7))


def iso_week_of(ts_ms: int) -> str:
    year, week, _ = _utc(ts_ms).isocalendar()
    return f"{year}-W{week:02d}"


def _accepting_users(
    events: Iterable[TelemetryEvent], start: int, end: int, min_acceptances: int
) -> set[str]:
    counts = Counter(
        ev.user_id for ev in events if ev.kind is EventKind.ACCEPTED and start <= ev.ts_ms < end
    )
    return {u for u, n in counts.items() if n >= min_acceptances}


def active_users(
    events: Iterable[TelemetryEvent], window: str, at_ms: int, min_acceptances: int = 1
) -> set[str]:
    """Users with at least ``min_acceptances`` acceptances in the aligned window up to ``at_ms``."""
    start, _ = window_bounds(window, at_ms)
    return _accepting_users(events, start, at_ms + 1, min_acceptances)


def weekly_active(events: Iterable[TelemetryEvent], week: str, min_acceptances: int = 1) -> set[str]:
    start, end = parse_iso_week(week)
    return _accepting_users(events, start, end, min_acceptances)


def previous_week(week: str) -> str:
    start, _ = parse_iso_week(week)
    return iso_week_of(start - 1)


def retention(events: Sequence[TelemetryEvent], week: str, min_acceptances: int = 1) -> float | None:
    """Fraction of ``week``'s active users who were also active the week before."""
    current = weekly_active(events, week, min_acceptances)
    if not current:
        return None
    before = weekly_active(events, previous_week(week), min_acceptances)
    return len(current & before) / len(current)


def opt_out_rate(events: Iterable[TelemetryEvent], population: int) -> float | None:
    """Users whose latest opt event is OptOut, over the population size."""
    latest: dict[str, EventKind] = {}
    observed: set[str] = set()
    for ev in sort_events(events):
        observed.add(ev.user_id)
        if ev.kind in (EventKind.OPT_OUT, EventKind.OPT_IN):
            latest[ev.user_id] = ev.kind
    if population == 0:
        return None
    if population < len(observed):
        raise ValueError(f"population {population} is smaller than the {len(observed)} users observed")
    return sum(1 for k in latest.values() if k is EventKind.OPT_OUT) / population
