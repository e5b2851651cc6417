"""Completion providers: HTTP endpoint, replay file, and an n-gram baseline.

HTTP wire format::

    POST <endpoint_url>
    {"prompt": "<rendered prompt>", "max_new_chars": 256, "stop": ["\\n"]}
    -> 200 {"text": "<completion>"}

``stop`` is only sent for single-line requests.
"""

from __future__ import annotations

import json
import logging
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import httpx

from sqlfim.fim import DEFAULT_MASK, FimPrompt, parse_rendered
from sqlfim.jsonl import read_jsonl
from sqlfim.lexer import TokenKind, tokenize

log = logging.getLogger(__name__)


class ProviderError(RuntimeError):
    pass


class ProviderTimeout(ProviderError):
    def __init__(self, elapsed_ms: float):
        super().__init__(f"provider timed out after {elapsed_ms:.0f} ms")
        self.elapsed_ms = elapsed_ms


class ProviderHTTPError(ProviderError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class ReplayMiss(ProviderError):
    def __init__(self, item_id: str):
        super().__init__(f"unknown item id: {item_id}")
        self.item_id = item_id


@dataclass(frozen=True)
class Completion:
    item_id: str
    text: str
    provider: str
    latency_ms: float
    truncated_single_line: bool = False


@dataclass
class ProviderConfig:
    kind: str
    name: str | None = None
    endpoint_url: str | None = None
    replay_path: str | None = None
    ngram_path: str | None = None
    timeout_ms: int = 10_000
    max_new_chars: int = 4096
    mask_token: str = DEFAULT_MASK
    headers: dict[str, str] = field(default_factory=dict)
    retries: int = 0

    def __post_init__(self):
        if self.kind not in ("http", "replay", "ngram"):
            raise ValueError(f"unknown provider kind: {self.kind!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.max_new_chars <= 0:
            raise ValueError("max_new_chars must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @property
    def label(self) -> str:
        return self.name or self.kind


class Provider:
    """Base class; subclasses implement :meth:`_generate`."""

    def __init__(self, config: ProviderConfig):
        self.config = config

    def _generate(self, prompt: FimPrompt, item_id: str, single_line: bool) -> str:
        raise NotImplementedError

    def complete(self, prompt: FimPrompt, item_id: str, single_line: bool = False) -> Completion:
        t0 = time.perf_counter()
        text = self._generate(prompt, item_id, single_line)
        latency = (time.perf_counter() - t0) * 1000.0
        return Completion(item_id, text[: self.config.max_new_chars], self.config.label, latency)

    def close(self) -> None:
        pass


class ReplayProvider(Provider):
    def __init__(self, config: ProviderConfig, table: dict[str, str] | None = None):
        super().__init__(config)
        if table is None:
            if not config.replay_path:
                raise ValueError("replay provider needs replay_path")
            table = load_replay(config.replay_path)
        self.table = table

    def _generate(self, prompt, item_id, single_line):
        try:
            return self.table[item_id]
        except KeyError:
            raise ReplayMiss(item_id) from None


def load_replay(path: str | Path) -> dict[str, str]:
    table = {}
    for rec in read_jsonl(path):
        if not isinstance(rec.get("id"), str) or not isinstance(rec.get("text"), str):
            raise ValueError(f"{path}: replay records need string 'id' and 'text'")
        table[rec["id"]] = rec["text"]
    return table


class HttpProvider(Provider):
    """JSON POST client; every attempt is logged, retries only when configured."""

    def __init__(self, config: ProviderConfig, transport: httpx.BaseTransport | None = None):
        super().__init__(config)
        if not config.endpoint_url:
            raise ValueError("http provider needs endpoint_url")
        self.client = httpx.Client(
            timeout=config.timeout_ms / 1000.0, headers=config.headers, transport=transport
        )

    def _generate(self, prompt, item_id, single_line):
        payload = {"prompt": prompt.rendered, "max_new_chars": self.config.max_new_chars}
        if single_line:
            payload["stop"] = ["\n"]
        attempts = self.config.retries + 1
        for attempt in range(1, attempts + 1):
            t0 = time.perf_counter()
            try:
                resp = self.client.post(self.config.endpoint_url, json=payload)
            except httpx.TimeoutException:
                elapsed = (time.perf_counter() - t0) * 1000.0
                log.warning("item %s attempt %d/%d: timeout after %.0f ms",
                            item_id, attempt, attempts, elapsed)
                err: ProviderError = ProviderTimeout(elapsed)
            except httpx.HTTPError as exc:
                log.warning("item %s attempt %d/%d: %s", item_id, attempt, attempts, exc)
                err = ProviderError(f"transport error: {exc}")
            else:
                log.info("item %s attempt %d/%d: HTTP %d", item_id, attempt, attempts, resp.status_code)
                if not 200 <= resp.status_code < 300:
                    err = ProviderHTTPError(resp.status_code, resp.text)
                else:
                    try:
                        text = resp.json()["text"]
                    except (ValueError, KeyError, TypeError):
                        err = ProviderError(f"malformed response body: {resp.text[:200]}")
                    else:
                        if isinstance(text, str):
                            return text
                        err = ProviderError("response 'text' is not a string")
        raise err

    def close(self):
        self.client.close()


BOS = "<s>"
EOS = "</s>"
NGRAM_FORMAT = "sqlfim-ngram"
NGRAM_VERSION = 1


def ngram_tokens(text: str) -> list[str]:
    """Token stream used by the n-gram model: comments dropped, whitespace
    reduced to ``" "`` or ``"\\n"``."""
    out = []
    for t in tokenize(text, lenient=True):
        if t.kind is TokenKind.COMMENT:
            continue
        if t.kind is TokenKind.WHITESPACE:
            ws = "\n" if "\n" in t.lexeme else " "
            if out and out[-1] in (" ", "\n"):
                if ws == "\n":
                    out[-1] = ws
                continue
            out.append(ws)
        else:
            out.append(t.lexeme)
    return out


class NgramModel:
    """Token n-gram counts.  Decoding is greedy and backs off to the longest
    context seen in training; ties go to the lexicographically smallest token."""

    def __init__(self, n: int, counts: dict[tuple[str, ...], Counter] | None = None):
        if not 2 <= n <= 5:
            raise ValueError(f"n-gram order must be in [2, 5], got {n}")
        self.n = n
        self.counts: dict[tuple[str, ...], Counter] = counts if counts is not None else defaultdict(Counter)

    def observe(self, tokens: list[str]) -> None:
        seq = [BOS] * (self.n - 1) + tokens + [EOS]
        for i in range(self.n - 1, len(seq)):
            nxt = seq[i]
            for k in range(self.n):
                self.counts[tuple(seq[i - k:i])][nxt] += 1

    def next_token(self, context: list[str]) -> str:
        ctx = ([BOS] * (self.n - 1) + context)[-(self.n - 1):]
        for k in range(len(ctx), -1, -1):
            dist = self.counts.get(tuple(ctx[len(ctx) - k:]))
            if dist:
                best = max(dist.values())
                return min(tok for tok, c in dist.items() if c == best)
        return EOS

    def generate(self, before: str, max_chars: int, stop_at_newline: bool = False) -> str:
        context = ngram_tokens(before)
        out: list[str] = []
        size = 0
        while size < max_chars:
            tok = self.next_token(context)
            if tok == EOS or (stop_at_newline and tok == "\n"):
                break
            out.append(tok)
            context.append(tok)
            size += len(tok)
        return "".join(out)[:max_chars]

    def to_json(self) -> dict:
        table = [
            [list(ctx), tok, cnt]
            for ctx in sorted(self.counts)
            for tok, cnt in sorted(self.counts[ctx].items())
        ]
        return {"format": NGRAM_FORMAT, "version": NGRAM_VERSION, "n": self.n, "counts": table}

    @classmethod
    def from_json(cls, data: dict) -> "NgramModel":
        if data.get("format") != NGRAM_FORMAT:
            raise ValueError("not an n-gram model file")
        if data.get("version") != NGRAM_VERSION:
            raise ValueError(f"unsupported n-gram model version {data.get('version')!r}")
        counts: dict[tuple[str, ...], Counter] = defaultdict(Counter)
        for ctx, tok, cnt in data["counts"]:
            counts[tuple(ctx)][tok] = cnt
        return cls(data["n"], counts)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NgramModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def train_ngram(texts: Iterable[str], n: int = 3) -> NgramModel:
    model = NgramModel(n)
    seen = 0
    for text in texts:
        tokenize(text)  # corpus must lex strictly
        model.observe(ngram_tokens(text))
        seen += 1
    if not seen:
        raise ValueError("cannot train an n-gram model on an empty corpus")
    return model


class NgramProvider(Provider):
    def __init__(self, config: ProviderConfig, model: NgramModel | None = None):
        super().__init__(config)
        if model is None:
            if not config.ngram_path:
                raise ValueError("ngram provider needs ngram_path")
            model = NgramModel.load(config.ngram_path)
        self.model = model

    def _generate(self, prompt, item_id, single_line):
        before = parse_rendered(prompt.rendered, prompt.mask_token)["before"]
        return self.model.generate(before, self.config.max_new_chars, stop_at_newline=single_line)


def build_provider(config: ProviderConfig) -> Provider:
    if config.kind == "http":
        return HttpProvider(config)
    if config.kind == "replay":
        return ReplayProvider(config)
    return NgramProvider(config)
