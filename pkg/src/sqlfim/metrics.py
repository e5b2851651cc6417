"""Per-item completion metrics and their aggregation.

BLEU recipe (sentence level, over significant lexer tokens):

* candidate and reference are the lexemes of the non-whitespace, non-comment
  tokens; compound keywords have their inner whitespace collapsed;
* n-gram orders 1..N with N = min(4, len(candidate), len(reference));
* clipped precision m_n / t_n, where an order with m_n == 0 uses
  1e-9 / max(t_n, 1) instead;
* uniform-weight geometric mean times the brevity penalty
  exp(1 - r/c) when c <= r, else 1;
* empty candidate: 0 unless the reference is empty too (then 1).
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from sqlfim.benchgen import BenchmarkItem, Mode
from sqlfim.fim import DEFAULT_BUDGET, Metadata, build_inference_prompt, truncate_single_line
from sqlfim.lexer import TokenKind, extract_keywords, extract_tables, tokenize
from sqlfim.providers import Completion, Provider, ProviderError

log = logging.getLogger(__name__)

BLEU_MAX_ORDER = 4
BLEU_EPSILON = 1e-9


def normalize_em(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n").strip()


def exact_match(pred: str, target: str) -> int:
    return int(normalize_em(pred) == normalize_em(target))


def bleu_tokens(text: str) -> list[str]:
    return [
        t.keyword if t.kind is TokenKind.KEYWORD and " " in t.keyword else t.lexeme
        for t in tokenize(text, lenient=True)
        if t.significant
    ]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(pred: str, target: str) -> float:
    cand = bleu_tokens(pred)
    ref = bleu_tokens(target)
    if not cand:
        return 1.0 if not ref else 0.0
    if not ref:
        return 0.0
    order = min(BLEU_MAX_ORDER, len(cand), len(ref))
    log_sum = 0.0
    for n in range(1, order + 1):
        cand_ngrams = _ngrams(cand, n)
        ref_ngrams = _ngrams(ref, n)
        matches = sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items())
        total = max(len(cand) - n + 1, 0)
        p = matches / total if matches else BLEU_EPSILON / max(total, 1)
        log_sum += math.log(p) / order
    c, r = len(cand), len(ref)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum)


def containment(pred: str, target: str) -> float:
    """Share of the target's keyword multiset that the prediction also contains."""
    want = extract_keywords(tokenize(target, lenient=True))
    if not want:
        return 1.0
    have = extract_keywords(tokenize(pred, lenient=True))
    return sum((want & have).values()) / sum(want.values())


def table_match(pred: str, target: str) -> int | None:
    """1 if both reference the same table set, 0 if not, None when the target names no table."""
    want = extract_tables(tokenize(target, lenient=True))
    if not want:
        return None
    return int(extract_tables(tokenize(pred, lenient=True)) == want)


@dataclass
class ItemScore:
    item_id: str
    mode: str
    complexity: str
    length_category: str
    provider: str
    prediction: str | None = None
    em: int | None = None
    bleu: float | None = None
    containment: float | None = None
    table_match: int | None = None
    error: str | None = None

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "ItemScore":
        return cls(**{k: rec.get(k) for k in cls.__dataclass_fields__})


def score_item(item: BenchmarkItem, prediction: str, provider: str) -> ItemScore:
    return ItemScore(
        item_id=item.id,
        mode=item.mode.value,
        complexity=item.complexity,
        length_category=item.length_category,
        provider=provider,
        prediction=prediction,
        em=exact_match(prediction, item.target),
        bleu=bleu(prediction, item.target),
        containment=containment(prediction, item.target),
        table_match=table_match(prediction, item.target),
    )


@dataclass
class Summary:
    count: int = 0
    scored: int = 0
    failed: int = 0
    table_match_applicable: int = 0
    em: float | None = None
    bleu: float | None = None
    containment: float | None = None
    table_match: float | None = None


def _mean(values: list[float]) -> float | None:
    return math.fsum(values) / len(values) if values else None


def summarize(scores: Iterable[ItemScore]) -> Summary:
    scores = list(scores)
    ok = [s for s in scores if s.error is None]
    tms = [s.table_match for s in ok if s.table_match is not None]
    return Summary(
        count=len(scores),
        scored=len(ok),
        failed=len(scores) - len(ok),
        table_match_applicable=len(tms),
        em=_mean([s.em for s in ok]),
        bleu=_mean([s.bleu for s in ok]),
        containment=_mean([s.containment for s in ok]),
        table_match=_mean(tms),
    )


def benchmark_fingerprint(item_ids: Iterable[str]) -> str:
    h = hashlib.sha256()
    for item_id in sorted(item_ids):
        h.update(item_id.encode("utf-8") + b"\n")
    return h.hexdigest()[:16]


@dataclass
class MetricReport:
    provider: str
    benchmark: str
    modes: dict[str, Summary]
    breakdown: dict[str, dict[str, Summary]]
    failure_rate: float
    max_failure_rate: float
    failed: bool
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        return cls(
            provider=data["provider"],
            benchmark=data["benchmark"],
            modes={m: Summary(**s) for m, s in data["modes"].items()},
            breakdown={
                m: {cell: Summary(**s) for cell, s in cells.items()}
                for m, cells in data["breakdown"].items()
            },
            failure_rate=data["failure_rate"],
            max_failure_rate=data["max_failure_rate"],
            failed=data["failed"],
            config=data.get("config", {}),
        )


def aggregate(
    scores: Sequence[ItemScore], provider: str, max_failure_rate: float = 0.10, config: dict | None = None
) -> MetricReport:
    by_mode: dict[str, list[ItemScore]] = {}
    for s in scores:
        by_mode.setdefault(s.mode, []).append(s)
    modes = {m: summarize(by_mode[m]) for m in sorted(by_mode)}
    breakdown = {}
    for m in sorted(by_mode):
        cells: dict[str, list[ItemScore]] = {}
        for s in by_mode[m]:
            cells.setdefault(f"{s.complexity}/{s.length_category}", []).append(s)
        breakdown[m] = {cell: summarize(cells[cell]) for cell in sorted(cells)}
    failed = sum(1 for s in scores if s.error is not None)
    rate = failed / len(scores) if scores else 0.0
    return MetricReport(
        provider=provider,
        benchmark=benchmark_fingerprint(s.item_id for s in scores),
        modes=modes,
        breakdown=breakdown,
        failure_rate=rate,
        max_failure_rate=max_failure_rate,
        failed=rate > max_failure_rate,
        config=config or {},
    )


def evaluate(
    items: Sequence[BenchmarkItem],
    provider: Provider,
    mode: Mode | None = None,
    budget: int = DEFAULT_BUDGET,
    metadata: Metadata = Metadata(),
    parallelism: int = 1,
    max_failure_rate: float = 0.10,
    config: dict | None = None,
) -> tuple[MetricReport, list[ItemScore], list[Completion]]:
    """Prompt the provider for every item (of ``mode``, or all) and score the answers.

    Single-line items have their completion cut at the first newline.  A
    failed provider call is recorded on the item and left out of the means.
    """
    selected = sorted((it for it in items if mode is None or it.mode is mode), key=lambda it: it.id)
    name = provider.config.label

    def run(item: BenchmarkItem) -> tuple[ItemScore, Completion | None]:
        single = item.mode is Mode.SINGLE
        prompt = build_inference_prompt(item, metadata, budget, provider.config.mask_token)
        try:
            comp = provider.complete(prompt, item.id, single_line=single)
        except ProviderError as exc:
            log.warning("item %s: %s", item.id, exc)
            return ItemScore(item.id, item.mode.value, item.complexity, item.length_category,
                             name, error=str(exc)), None
        text = comp.text
        if single:
            text = truncate_single_line(text)
            comp = Completion(comp.item_id, text, comp.provider, comp.latency_ms,
                              truncated_single_line=text != comp.text)
        return score_item(item, text, name), comp

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run, selected))
    else:
        results = [run(it) for it in selected]
    scores = [s for s, _ in results]
    completions = [c for _, c in results if c is not None]
    report = aggregate(scores, name, max_failure_rate, config)
    return report, scores, completions
