import random

import pytest
from hypothesis import given, settings, strategies as st

from reference_bleu import bleu_fixture, reference_bleu
from sqlfim.benchgen import generate
from sqlfim.metrics import (
    ItemScore, aggregate, bleu, containment, evaluate, exact_match, score_item, summarize, table_match,
)
from sqlfim.providers import ProviderConfig, ReplayProvider


@pytest.mark.parametrize("pred, target, expected", [
    ("a, b", "a, b", 1), ("a, b ", "a, b", 1), ("a,b", "a, b", 0), ("x\r\ny", "x\ny", 1), ("\n a", "a", 1),
])
def test_exact_match(pred, target, expected):
    assert exact_match(pred, target) == expected


def test_bleu_identity_and_disjoint():
    q = "SELECT a, b FROM t WHERE x = 1 GROUP BY a"
    assert bleu(q, q) == 1.0
    assert bleu("foo bar baz qux", q) <= 1e-6


def test_bleu_empty_cases():
    assert bleu("", "") == 1.0
    assert bleu("", "SELECT") == 0.0
    assert bleu("SELECT", "") == 0.0
    assert bleu("-- only a comment", "") == 1.0


def test_bleu_cross_check_example():
    assert bleu("SELECT a FROM t", "SELECT a FROM u") == pytest.approx(reference_bleu("SELECT a FROM t", "SELECT a FROM u"), abs=1e-9)


def test_bleu_cross_check_fixture(synth_texts):
    for pred, target in bleu_fixture(synth_texts):
        assert abs(bleu(pred, target) - reference_bleu(pred, target)) <= 1e-9


def test_bleu_ignores_layout():
    assert bleu("SELECT a\n  FROM t -- x", "SELECT a FROM t") == 1.0
    assert bleu("group   by a", "GROUP BY a") == bleu("GROUP BY a", "GROUP BY a")


def test_containment():
    assert containment("SELECT a FROM t", "SELECT a FROM t WHERE x = 1") == pytest.approx(2 / 3)
    assert containment("anything", "a, b") == 1.0
    assert containment("SELECT DISTINCT a FROM t JOIN u ON TRUE WHERE 1", "SELECT a FROM t") == 1.0
    # multiset: the target has SELECT twice and UNION once
    assert containment("SELECT a", "SELECT a UNION SELECT b") == pytest.approx(1 / 3)


def test_table_match():
    assert table_match("FROM session_info", "FROM dm_session_info") == 0
    assert table_match("FROM dm_users u JOIN ev e ON 1=1", "FROM dm_users AS x JOIN ev y ON 1=1") == 1
    assert table_match("FROM t", "a, b") is None


def test_score_item_em_implies_rest(balanced_corpus):
    items, _ = generate(balanced_corpus, 2, seed=3)
    for it in items:
        s = score_item(it, it.target + "  ", "p")
        assert s.em == 1 and s.bleu == 1.0 and s.containment == 1.0 and s.table_match in (1, None)


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_em_le_other_metrics(balanced_corpus, seed):
    rnd = random.Random(seed)
    target = rnd.choice(balanced_corpus).text
    pred = target if rnd.random() < 0.3 else " ".join(w for w in target.split(" ") if rnd.random() < 0.7)
    s_em, s_bleu, s_cs = exact_match(pred, target), bleu(pred, target), containment(pred, target)
    assert s_em <= s_bleu and s_em <= s_cs
    assert 0.0 <= s_bleu <= 1.0 and 0.0 <= s_cs <= 1.0
    noisy = pred + rnd.choice([" ", "\n", "  \n\t"])
    assert (exact_match(noisy, target), bleu(noisy, target), containment(noisy, target),
            table_match(noisy, target)) == (s_em, s_bleu, s_cs, table_match(pred, target))


def test_summary_excludes_failures_and_na():
    scores = [
        ItemScore("a", "single", "easy", "small", "p", "x", 1, 1.0, 1.0, None),
        ItemScore("b", "single", "easy", "small", "p", "y", 0, 0.5, 0.5, 0),
        ItemScore("c", "single", "easy", "small", "p", error="boom"),
    ]
    s = summarize(scores)
    assert (s.count, s.scored, s.failed, s.table_match_applicable) == (3, 2, 1, 1)
    assert (s.em, s.bleu, s.containment, s.table_match) == (0.5, 0.75, 0.75, 0.0)


def test_aggregation_order_independent(balanced_corpus):
    items, _ = generate(balanced_corpus, 3, seed=5)
    rnd = random.Random(0)
    scores = [score_item(it, it.target if rnd.random() < 0.5 else "x", "p") for it in items]
    shuffled = scores[:]
    rnd.shuffle(shuffled)
    assert aggregate(scores, "p").to_dict() == aggregate(shuffled, "p").to_dict()


def test_evaluate_identity_and_failure_accounting(balanced_corpus):
    items, _ = generate(balanced_corpus, 2, seed=1)
    table = {it.id: it.target for it in items}
    report, scores, comps = evaluate(items, ReplayProvider(ProviderConfig("replay"), table), parallelism=4)
    for summary in report.modes.values():
        assert (summary.em, summary.bleu, summary.containment) == (1.0, 1.0, 1.0)
        assert summary.table_match in (1.0, None)
    assert sum(s.count for s in report.modes.values()) == len(items)
    assert not report.failed and len(comps) == len(items)

    for key in list(table)[: len(items) // 5]:
        del table[key]
    report, scores, comps = evaluate(items, ReplayProvider(ProviderConfig("replay"), table), max_failure_rate=0.1)
    assert report.failed and report.failure_rate == (len(items) // 5) / len(items)
    assert all("unknown item id" in s.error for s in scores if s.error)


def test_evaluate_single_line_truncation(balanced_corpus):
    items, _ = generate(balanced_corpus, 1, seed=1)
    singles = [it for it in items if it.mode.value == "single"]
    table = {it.id: it.target + "\nFROM extra" for it in singles}
    report, scores, comps = evaluate(singles, ReplayProvider(ProviderConfig("replay"), table))
    assert report.modes["single"].em == 1.0
    assert all(c.truncated_single_line for c in comps)
