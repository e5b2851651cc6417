"""Language-level causal masking: prompt and training-sample construction.

Layout of a rendered training sample (no separators between segments)::

    lang:<tag> path:<origin_path> kernel:<kernel_name>\\n
    <before><mask><after><mask><target>

An inference prompt is the same string without ``<target>``.  Budgets are
counted in characters, not model tokens; providers tokenize on their side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sqlfim.benchgen import BenchmarkItem
from sqlfim.lexer import TokenKind, tokenize

DEFAULT_MASK = "<mask>"
DEFAULT_BUDGET = 4096

TRIGGER_CHARS = frozenset("(.=")
TRIGGER_KEYWORDS = frozenset({"SELECT", "WHERE", "FROM"})
# A trigger character inside one of these tokens is not a trigger.
_INERT = (
    TokenKind.COMMENT,
    TokenKind.STRING_LITERAL,
    TokenKind.QUOTED_IDENTIFIER,
    TokenKind.NUMERIC_LITERAL,
)


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class Metadata:
    lang: str = "sql"
    path: str = ""
    kernel: str = ""

    def render(self) -> str:
        for value in (self.lang, self.path, self.kernel):
            if "\n" in value or "\r" in value:
                raise PromptError("metadata fields must be single-line")
        return f"lang:{self.lang} path:{self.path} kernel:{self.kernel}\n"


@dataclass(frozen=True)
class FimPrompt:
    metadata: str
    before: str
    after: str
    mask_token: str
    budget: int
    rendered: str


@dataclass(frozen=True)
class TrainingSample:
    prompt: FimPrompt
    target: str
    rendered: str


def trigger_positions(text: str) -> list[int]:
    """Offsets where a masked span may start: at ``( . =`` or at SELECT/WHERE/FROM."""
    out = []
    for tok in tokenize(text):
        if tok.kind in _INERT:
            continue
        if tok.kind in (TokenKind.KEYWORD, TokenKind.IDENTIFIER):
            if tok.keyword in TRIGGER_KEYWORDS:
                out.append(tok.start)
            continue
        out.extend(tok.start + i for i, ch in enumerate(tok.lexeme) if ch in TRIGGER_CHARS)
    return out


def select_mask_span(text: str, rng: np.random.Generator) -> tuple[int, int]:
    """One span starting at a uniformly drawn trigger, ending at a later trigger or end of text."""
    starts = trigger_positions(text)
    if not starts:
        raise PromptError("query has no masking trigger")
    start = starts[int(rng.integers(len(starts)))]
    ends = [p for p in starts if p > start] + [len(text)]
    return start, ends[int(rng.integers(len(ends)))]


def split_budget(code_budget: int) -> tuple[int, int]:
    """70/30 split of the code budget: (before limit, after limit)."""
    after = 3 * code_budget // 10
    return code_budget - after, after


def _assemble(before: str, after: str, metadata: Metadata, budget: int, mask_token: str) -> FimPrompt:
    if not mask_token:
        raise PromptError("mask token must be non-empty")
    meta = metadata.render()
    for part in (meta, before, after):
        if mask_token in part:
            raise PromptError("input text contains the mask token")
    code_budget = budget - len(meta) - 2 * len(mask_token)
    if code_budget < 1:
        raise PromptError(
            f"budget {budget} leaves no room for code after metadata and mask tokens"
        )
    before_limit, after_limit = split_budget(code_budget)
    before = before[len(before) - before_limit:] if len(before) > before_limit else before
    after = after[:after_limit]
    rendered = meta + before + mask_token + after + mask_token
    return FimPrompt(meta, before, after, mask_token, budget, rendered)


def _parts(item: BenchmarkItem | tuple[str, tuple[int, int]]) -> tuple[str, str, str]:
    if isinstance(item, BenchmarkItem):
        return item.prefix, item.target, item.suffix
    text, (start, end) = item
    if not 0 <= start < end <= len(text):
        raise PromptError(f"invalid span {(start, end)} for text of length {len(text)}")
    return text[:start], text[start:end], text[end:]


def build_inference_prompt(
    item: BenchmarkItem | tuple[str, tuple[int, int]],
    metadata: Metadata = Metadata(),
    budget: int = DEFAULT_BUDGET,
    mask_token: str = DEFAULT_MASK,
) -> FimPrompt:
    before, _, after = _parts(item)
    return _assemble(before, after, metadata, budget, mask_token)


def build_training_sample(
    item: BenchmarkItem | tuple[str, tuple[int, int]],
    metadata: Metadata = Metadata(),
    budget: int = DEFAULT_BUDGET,
    mask_token: str = DEFAULT_MASK,
) -> TrainingSample:
    before, target, after = _parts(item)
    if mask_token in target:
        raise PromptError("input text contains the mask token")
    prompt = _assemble(before, after, metadata, budget, mask_token)
    return TrainingSample(prompt, target, prompt.rendered + target)


def parse_rendered(rendered: str, mask_token: str = DEFAULT_MASK) -> dict[str, str]:
    """Split a rendered prompt or sample back into its segments."""
    pieces = rendered.split(mask_token)
    if len(pieces) != 3:
        raise PromptError(f"expected exactly two mask tokens, found {len(pieces) - 1}")
    head, after, target = pieces
    meta, sep, before = head.partition("\n")
    if not sep:
        raise PromptError("missing metadata line")
    return {"metadata": meta + "\n", "before": before, "after": after, "target": target}


def truncate_single_line(completion: str) -> str:
    return completion.split("\n", 1)[0]
