"""Lossless SQL tokenizer and the query-level extractors built on it.

The lexer targets a Presto-flavoured subset of SQL.  It never validates
syntax: every input that does not contain an unterminated string, quoted
identifier or block comment lexes, and joining the lexemes gives back the
input unchanged.
"""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


class TokenKind(enum.Enum):
    KEYWORD = "Keyword"
    IDENTIFIER = "Identifier"
    QUOTED_IDENTIFIER = "QuotedIdentifier"
    NUMERIC_LITERAL = "NumericLiteral"
    STRING_LITERAL = "StringLiteral"
    OPERATOR = "Operator"
    PUNCTUATION = "Punctuation"
    COMMENT = "Comment"
    WHITESPACE = "Whitespace"


class Complexity(enum.IntEnum):
    EASY = 0
    MEDIUM = 1
    HARD = 2
    EXTRA_HARD = 3

    @property
    def label(self) -> str:
        return _COMPLEXITY_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "Complexity":
        for level, name in _COMPLEXITY_LABELS.items():
            if name == label:
                return level
        raise ValueError(f"unknown complexity label: {label!r}")


_COMPLEXITY_LABELS = {
    Complexity.EASY: "easy",
    Complexity.MEDIUM: "medium",
    Complexity.HARD: "hard",
    Complexity.EXTRA_HARD: "extra_hard",
}

COMPLEXITY_TIERS: dict[Complexity, frozenset[str]] = {
    Complexity.EASY: frozenset({"SELECT", "FROM", "WHERE"}),
    Complexity.MEDIUM: frozenset({"JOIN", "GROUP BY", "HAVING", "ORDER BY"}),
    Complexity.HARD: frozenset({"UNION", "EXCEPT", "INTERSECT", "LIMIT"}),
    Complexity.EXTRA_HARD: frozenset({"WITH", "CASE", "IF", "COALESCE"}),
}

_TIER_OF = {kw: level for level, kws in COMPLEXITY_TIERS.items() for kw in kws}

DEFAULT_VOCABULARY: frozenset[str] = frozenset().union(
    *COMPLEXITY_TIERS.values(),
    {
        "LEFT", "RIGHT", "INNER", "OUTER", "FULL", "CROSS",
        "ON", "AS", "AND", "OR", "NOT", "IN", "BETWEEN", "LIKE", "DISTINCT",
    },
)

# Words that end a table reference; compared on the upper-cased lexeme so the
# table recognizer does not depend on the configured keyword vocabulary.
_CLAUSE_WORDS = frozenset({
    "SELECT", "FROM", "WHERE", "WITH", "AS", "ON", "USING", "JOIN", "LEFT",
    "RIGHT", "INNER", "OUTER", "FULL", "CROSS", "NATURAL", "LATERAL", "GROUP BY",
    "ORDER BY", "GROUP", "ORDER", "HAVING", "LIMIT", "OFFSET", "FETCH", "UNION",
    "EXCEPT", "INTERSECT", "WINDOW", "TABLESAMPLE", "QUALIFY", "AND", "OR",
    "NOT", "IN", "CASE", "WHEN", "THEN", "ELSE", "END", "SET", "VALUES", "INTO",
})


class LexError(ValueError):
    """Raised for an unterminated string, quoted identifier or block comment."""

    def __init__(self, message: str, span: tuple[int, int]):
        super().__init__(f"{message} at offset {span[0]}")
        self.span = span

    @property
    def offset(self) -> int:
        return self.span[0]


@dataclass(frozen=True, slots=True)
class Token:
    kind: TokenKind
    lexeme: str
    start: int
    end: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def keyword(self) -> str:
        """Canonical keyword text: upper case, inner whitespace collapsed."""
        return " ".join(self.lexeme.upper().split())

    @property
    def significant(self) -> bool:
        return self.kind not in (TokenKind.WHITESPACE, TokenKind.COMMENT)


def load_vocabulary(path: str | Path) -> frozenset[str]:
    """Read a keyword list: one keyword per line, ``#`` starts a comment."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.add(" ".join(line.upper().split()))
    return frozenset(words)


_WHITESPACE = re.compile(r"\s+")
_WORD = re.compile(r"[^\W\d]\w*")
_NUMBER = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_OPERATORS = ("<=>", "<>", "<=", ">=", "!=", "==", "||", "->", "=>", "::")
_OPERATOR_CHARS = frozenset("+-*/%=<>!|&^~")


def _compound_words(vocabulary: frozenset[str]) -> dict[str, set[str]]:
    compounds: dict[str, set[str]] = {}
    for entry in vocabulary:
        parts = entry.split()
        if len(parts) == 2:
            compounds.setdefault(parts[0], set()).add(parts[1])
    return compounds


def tokenize(
    text: str,
    vocabulary: frozenset[str] = DEFAULT_VOCABULARY,
    lenient: bool = False,
) -> list[Token]:
    """Split ``text`` into a lossless token sequence.

    With ``lenient=True`` an unterminated literal or comment runs to the end
    of the text instead of raising; metrics use this on model output.
    """
    compounds = _compound_words(vocabulary)
    tokens: list[Token] = []
    pos = 0
    n = len(text)

    def emit(kind: TokenKind, end: int) -> None:
        nonlocal pos
        tokens.append(Token(kind, text[pos:end], pos, end))
        pos = end

    while pos < n:
        ch = text[pos]
        if ch.isspace():
            emit(TokenKind.WHITESPACE, _WHITESPACE.match(text, pos).end())
        elif text.startswith("--", pos):
            nl = text.find("\n", pos)
            emit(TokenKind.COMMENT, n if nl < 0 else nl)
        elif text.startswith("/*", pos):
            close = text.find("*/", pos + 2)
            if close < 0:
                if not lenient:
                    raise LexError("unterminated block comment", (pos, n))
                emit(TokenKind.COMMENT, n)
            else:
                emit(TokenKind.COMMENT, close + 2)
        elif ch in "'\"`":
            kind = TokenKind.STRING_LITERAL if ch == "'" else TokenKind.QUOTED_IDENTIFIER
            end = _scan_quoted(text, pos, ch)
            if end < 0:
                if not lenient:
                    what = "string literal" if ch == "'" else "quoted identifier"
                    raise LexError(f"unterminated {what}", (pos, n))
                end = n
            emit(kind, end)
        elif m := _NUMBER.match(text, pos):
            emit(TokenKind.NUMERIC_LITERAL, m.end())
        elif m := _WORD.match(text, pos):
            word = m.group().upper()
            end = m.end()
            follow = compounds.get(word)
            if follow:
                ws = _WHITESPACE.match(text, end)
                if ws:
                    nxt = _WORD.match(text, ws.end())
                    if nxt and nxt.group().upper() in follow:
                        emit(TokenKind.KEYWORD, nxt.end())
                        continue
            emit(TokenKind.KEYWORD if word in vocabulary else TokenKind.IDENTIFIER, end)
        elif op := next((o for o in _OPERATORS if text.startswith(o, pos)), None):
            emit(TokenKind.OPERATOR, pos + len(op))
        elif ch in _OPERATOR_CHARS:
            emit(TokenKind.OPERATOR, pos + 1)
        else:
            # Anything unrecognised stays a one-character token so lexing is total.
            emit(TokenKind.PUNCTUATION, pos + 1)
    return tokens


def _scan_quoted(text: str, start: int, quote: str) -> int:
    """Return the end offset of a quoted run (doubled quotes escape), or -1."""
    pos = start + 1
    while True:
        close = text.find(quote, pos)
        if close < 0:
            return -1
        if text.startswith(quote * 2, close):
            pos = close + 2
            continue
        return close + 1


def significant(tokens: Iterable[Token]) -> list[Token]:
    return [t for t in tokens if t.significant]


def extract_keywords(tokens: Iterable[Token]) -> Counter[str]:
    return Counter(t.keyword for t in tokens if t.kind is TokenKind.KEYWORD)


def classify_complexity(tokens: Iterable[Token]) -> Complexity:
    level = Complexity.EASY
    for t in tokens:
        if t.kind is TokenKind.KEYWORD:
            level = max(level, _TIER_OF.get(t.keyword, Complexity.EASY))
    return level


def _name_part(tok: Token) -> str | None:
    if tok.kind is TokenKind.QUOTED_IDENTIFIER:
        q = tok.lexeme[0]
        return tok.lexeme[1:-1].replace(q * 2, q)
    if tok.kind in (TokenKind.IDENTIFIER, TokenKind.KEYWORD) and tok.keyword not in _CLAUSE_WORDS:
        return tok.lexeme.lower()
    return None


def _is_punct(tok: Token | None, ch: str) -> bool:
    return tok is not None and tok.kind is TokenKind.PUNCTUATION and tok.lexeme == ch


class _TableScanner:
    """Pragmatic FROM/JOIN recognizer over significant tokens."""

    def __init__(self, tokens: Sequence[Token]):
        self.toks = significant(tokens)
        self.ctes: set[str] = set()
        self.tables: list[str] = []
        # Commas that separate one CTE body from the next CTE definition.
        self.cte_commas: set[int] = set()
        # Closing parens of derived tables in a FROM/JOIN list.
        self.derived_close: set[int] = set()

    def at(self, i: int) -> Token | None:
        return self.toks[i] if 0 <= i < len(self.toks) else None

    def skip_group(self, i: int) -> int:
        """``i`` points at '('; return the index just past its matching ')'."""
        depth = 0
        while i < len(self.toks):
            if _is_punct(self.toks[i], "("):
                depth += 1
            elif _is_punct(self.toks[i], ")"):
                depth -= 1
                if depth == 0:
                    return i + 1
            i += 1
        return i

    def read_name(self, i: int) -> tuple[str | None, int]:
        first = self.at(i)
        part = _name_part(first) if first else None
        if part is None:
            return None, i
        parts = [part]
        i += 1
        while _is_punct(self.at(i), ".") and self.at(i + 1) and _name_part(self.at(i + 1)) is not None:
            parts.append(_name_part(self.at(i + 1)))
            i += 2
        return ".".join(parts), i

    def skip_alias(self, i: int) -> int:
        tok = self.at(i)
        if tok is not None and tok.keyword == "AS":
            i += 1
            tok = self.at(i)
            if tok is not None and _name_part(tok) is not None:
                i += 1
        elif tok is not None and _name_part(tok) is not None:
            i += 1
        else:
            return i
        if _is_punct(self.at(i), "("):  # column alias list
            i = self.skip_group(i)
        return i

    def table_refs(self, i: int) -> int:
        while True:
            tok = self.at(i)
            if _is_punct(tok, "("):
                # Derived table: let the main scan walk into it, and resume the
                # FROM list once its closing paren is reached.
                self.derived_close.add(self.skip_group(i) - 1)
                return i
            if tok is not None and tok.keyword == "LATERAL":
                i += 1
            name, j = self.read_name(i)
            if name is None:
                return i
            if _is_punct(self.at(j), "("):  # table function such as UNNEST(...)
                j = self.skip_group(j)
            else:
                self.tables.append(name)
            i, more = self.after_ref(j)
            if not more:
                return i

    def after_ref(self, i: int) -> tuple[int, bool]:
        """Skip an alias; report whether a comma announces another reference."""
        i = self.skip_alias(i)
        if _is_punct(self.at(i), ","):
            return i + 1, True
        return i, False

    def cte_list(self, i: int) -> int:
        """``i`` points just past WITH; record CTE names, return index after the list."""
        if self.at(i) is not None and self.at(i).keyword == "RECURSIVE":
            i += 1
        while True:
            name, j = self.read_name(i)
            if name is None:
                return i
            if _is_punct(self.at(j), "("):
                j = self.skip_group(j)
            if self.at(j) is None or self.at(j).keyword != "AS":
                return i
            self.ctes.add(name)
            j += 1
            if _is_punct(self.at(j), "("):
                # The body is scanned later by the main loop, so only step past '('.
                end = self.skip_group(j)
                if _is_punct(self.at(end), ","):
                    self.cte_commas.add(end)
            return j

    def run(self) -> set[str]:
        # One flag per open paren group: has a SELECT appeared inside it yet?
        # FROM inside e.g. EXTRACT(year FROM ds) must not count as a table.
        select_seen = [True]
        i = 0
        while i < len(self.toks):
            tok = self.toks[i]
            kw = tok.keyword if tok.kind in (TokenKind.KEYWORD, TokenKind.IDENTIFIER) else None
            if _is_punct(tok, "("):
                select_seen.append(False)
            elif _is_punct(tok, ")"):
                if len(select_seen) > 1:
                    select_seen.pop()
                if i in self.derived_close:
                    i, more = self.after_ref(i + 1)
                    if more:
                        i = self.table_refs(i)
                    continue
            elif i in self.cte_commas:
                self.cte_commas.discard(i)
                i = self.cte_list(i + 1)
                continue
            if kw == "SELECT":
                select_seen[-1] = True
            elif kw == "WITH":
                i = self.cte_list(i + 1)
                continue
            elif kw == "FROM" and select_seen[-1]:
                i = self.table_refs(i + 1)
                continue
            elif kw == "JOIN":
                i = self.table_refs(i + 1)
                continue
            i += 1
        return {t for t in self.tables if t not in self.ctes}


def extract_tables(tokens: Sequence[Token]) -> set[str]:
    """Warehouse tables referenced after FROM/JOIN, minus CTE names and aliases.

    Unquoted name parts are lower-cased; quoted parts keep their case and lose
    their quotes.  Dotted names stay whole (``ns.table``).
    """
    return _TableScanner(tokens).run()


@dataclass(frozen=True)
class QueryProfile:
    keyword_multiset: Counter[str]
    table_set: frozenset[str]
    complexity: Complexity
    char_length: int
    line_count: int


def nonspace_length(text: str) -> int:
    return sum(1 for ch in text if not ch.isspace())


def profile_query(text: str, vocabulary: frozenset[str] = DEFAULT_VOCABULARY) -> QueryProfile:
    tokens = tokenize(text, vocabulary)
    return QueryProfile(
        keyword_multiset=extract_keywords(tokens),
        table_set=frozenset(extract_tables(tokens)),
        complexity=classify_complexity(tokens),
        char_length=nonspace_length(text),
        line_count=text.count("\n") + 1,
    )
