import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from sqlfim.benchgen import BenchmarkItem, Mode
from sqlfim.fim import (
    Metadata, PromptError, build_inference_prompt, build_training_sample, parse_rendered,
    select_mask_span, split_budget, trigger_positions, truncate_single_line,
)
from sqlfim.jsonl import make_rng
from sqlfim.lexer import tokenize

MASK = "<mask>"


def item(prefix, target, suffix, mode=Mode.MULTI):
    return BenchmarkItem("q:" + mode.value, prefix, target, suffix, mode, "easy", "small", "q")


def test_trigger_positions():
    text = "SELECT a FROM t WHERE x = 1"
    assert trigger_positions(text) == [0, 9, 16, 24]


def test_triggers_ignore_literals_and_comments():
    text = "SELECT 'a.b' -- FROM (\nFROM t.x"
    got = trigger_positions(text)
    assert got == [0, text.index("FROM t"), text.index(".x")]
    assert trigger_positions("1.5") == []


def test_no_trigger_is_error():
    with pytest.raises(PromptError):
        select_mask_span("bare_identifier", make_rng(0))


def test_mask_span_deterministic():
    text = "SELECT a FROM t WHERE f(x) = 1"
    assert select_mask_span(text, make_rng(4)) == select_mask_span(text, make_rng(4))


@given(st.integers(0, 2**32))
def test_mask_span_starts_at_trigger(seed):
    text = "SELECT a.b, COUNT(c) FROM ns.t\nWHERE d = 'x.y' AND e IN (1, 2)"
    start, end = select_mask_span(text, make_rng(seed))
    assert start in trigger_positions(text)
    assert end in trigger_positions(text) + [len(text)] and end > start
    # Re-lex the suffix: it must begin with a keyword trigger or a trigger char.
    first = tokenize(text[start:])[0]
    assert first.keyword in {"SELECT", "WHERE", "FROM"} or text[start] in "(.="


def test_huge_budget_no_truncation():
    sample = build_training_sample(item("SELECT ", "a", " FROM t"), budget=10_000)
    assert sample.prompt.before == "SELECT " and sample.prompt.after == " FROM t"
    assert sample.rendered.count(MASK) == 2
    assert sample.rendered == "lang:sql path: kernel:\nSELECT <mask> FROM t<mask>a"


def test_before_keeps_nearest_seventy():
    meta = Metadata()
    before = "".join(chr(97 + i % 26) for i in range(1000))
    budget = 100 + len(meta.render()) + 2 * len(MASK)
    prompt = build_inference_prompt(item(before, "x", "y" * 1000), meta, budget)
    assert prompt.before == before[-70:]
    assert prompt.after == "y" * 30


def test_fig_example_target_is_column_list():
    query = "SELECT\n  session_num,\n  final_authoring_time\nFROM dm_session_info"
    start = query.index("session_num")
    end = query.index("\nFROM")
    sample = build_training_sample((query, (start, end)), Metadata(path="q.sql", kernel="presto"))
    assert sample.target == "session_num,\n  final_authoring_time"
    assert sample.rendered.startswith("lang:sql path:q.sql kernel:presto\nSELECT\n  <mask>\nFROM dm_session_info<mask>")


def test_inference_prompt_ends_with_mask():
    prompt = build_inference_prompt(item("SELECT ", "a", "", Mode.SINGLE))
    assert prompt.rendered.endswith(MASK)
    assert prompt.after == "" and prompt.rendered.count(MASK) == 2


def test_budget_too_small():
    with pytest.raises(PromptError):
        build_inference_prompt(item("a", "b", "c"), budget=len("lang:sql path: kernel:\n") + 2 * len(MASK))


def test_mask_token_in_input_rejected():
    with pytest.raises(PromptError):
        build_inference_prompt(item("SELECT <mask>", "a", ""))
    with pytest.raises(PromptError):
        build_training_sample(item("SELECT ", "<mask>", ""))


def test_custom_mask_token():
    prompt = build_inference_prompt(item("SELECT ", "a", " FROM t"), mask_token="<FILL>")
    assert parse_rendered(prompt.rendered, "<FILL>")["after"] == " FROM t"


@pytest.mark.parametrize("text, expected", [("a, b\nFROM t", "a, b"), ("a, b", "a, b"), ("\nFROM", "")])
def test_truncate_single_line(text, expected):
    assert truncate_single_line(text) == expected


query_text = st.text(alphabet=st.characters(blacklist_characters="<", blacklist_categories=("Cs",)), max_size=300)


@given(query_text, st.integers(0, 2**32), st.integers(10, 400))
@settings(max_examples=300)
def test_larger_budget_extends_before(text, seed, small):
    if len(text) < 2:
        return
    rng = make_rng(seed)
    start = int(rng.integers(0, len(text)))
    end = int(rng.integers(start + 1, len(text) + 1))
    base = len(Metadata().render()) + 2 * len(MASK)
    lo = build_inference_prompt((text, (start, end)), budget=base + small)
    hi = build_inference_prompt((text, (start, end)), budget=base + small + int(rng.integers(1, 500)))
    assert hi.before.endswith(lo.before)
    assert hi.after.startswith(lo.after)


def test_split_budget_ratio():
    for cb in range(1, 2000):
        before, after = split_budget(cb)
        assert before + after == cb
        assert before == math.ceil(Fraction(7, 10) * cb)
        assert after == math.floor(Fraction(3, 10) * cb)
