"""Binary context features for a target numeral.

Eight boolean signals are computed from keyword tables and surface
patterns: percentage, relative change, option exercise price, option
maturity date, technical-indicator parameter, date, time, and quantity.
The "absolute" percentage case is derived (percentage and not relative)
rather than stored, which keeps the vector 8-dimensional.

All matching is case-insensitive over normalized tweets. Keyword tables
ship as resource files; the indicator list is open-ended and extensible
through ``load_keyword_tables(extra_indicators=...)``. The noun test for
the quantity feature is a bundled lexicon of singular forms, replaceable
by any callable for callers who prefer a real POS tagger.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .textprep import NormalizedTweet, normalize

CALL_PUT = frozenset({"call", "calls", "put", "puts"})

# Common unit abbreviations mapped onto table entries; the tables themselves
# stay exactly as shipped.
_ABBREVIATIONS = {
    "min": "minute",
    "mins": "minute",
    "sec": "second",
    "secs": "second",
    "hr": "hour",
    "hrs": "hour",
    "am": "a.m.",
    "pm": "p.m.",
    "mo": "mos",
    "yr": "yrs",
    "wk": "week",
    "wks": "week",
}

# Tokens skipped when looking for an indicator name after a numeral, so
# coordinated parameter lists ("50 & 200- DMA") reach the shared keyword.
_INDICATOR_SKIP = frozenset({"&", "and", ",", "-", "/", "+"})

_NUMERAL_TOKEN_RE = re.compile(r"[+-]?[0-9D]+(?:[.,/:][0-9D]+)*")
_SLASH_DATE_RE = re.compile(r"[+-]?\d+(?:/\d+)+")
_DASH_DATE_RE = re.compile(r"\d{1,4}-\d{1,2}-\d{2,4}")

RELATIVE_WINDOW = 5  # tokens on each side of the target


def _strip_plural(token: str) -> str:
    if token.endswith("ies") and len(token) > 4:
        return token[:-3] + "y"
    if token.endswith("s") and not token.endswith("ss") and len(token) > 3:
        return token[:-1]
    return token


def _read_terms(name: str) -> frozenset[str]:
    text = resources.files("numfin.resources").joinpath(name).read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


@dataclass(frozen=True)
class KeywordTables:
    key_p: frozenset[str]
    key_r: frozenset[str]
    key_m: frozenset[str]
    key_i: frozenset[str]
    key_d: frozenset[str]
    key_t: frozenset[str]


def load_keyword_tables(extra_indicators: tuple[str, ...] = ()) -> KeywordTables:
    return KeywordTables(
        key_p=_read_terms("key_p.txt"),
        key_r=_read_terms("key_r.txt"),
        key_m=_read_terms("key_m.txt"),
        key_i=_read_terms("key_i.txt") | frozenset(t.casefold() for t in extra_indicators),
        key_d=_read_terms("key_d.txt"),
        key_t=_read_terms("key_t.txt"),
    )


def load_noun_lexicon(path=None) -> frozenset[str]:
    if path is None:
        return _read_terms("nouns.txt")
    with open(path, encoding="utf-8") as fh:
        return frozenset(line.strip() for line in fh if line.strip())


@lru_cache(maxsize=1)
def _default_tables() -> KeywordTables:
    return load_keyword_tables()


@lru_cache(maxsize=1)
def _default_nouns() -> frozenset[str]:
    return load_noun_lexicon()


def _match(token: str, table: frozenset[str]) -> bool:
    t = token.casefold()
    if t in table:
        return True
    if _ABBREVIATIONS.get(t) in table:
        return True
    s = _strip_plural(t)
    if s != t and (s in table or _ABBREVIATIONS.get(s) in table):
        return True
    return False


@dataclass(frozen=True)
class FeatureVector:
    percentage: bool
    relative: bool
    exercise: bool
    maturity: bool
    indicator: bool
    date: bool
    time: bool
    quantity: bool

    NAMES = ("percentage", "relative", "exercise", "maturity", "indicator", "date", "time", "quantity")

    def __post_init__(self) -> None:
        if self.exercise and self.maturity:
            raise ValueError("exercise and maturity are mutually exclusive")

    def as_array(self) -> np.ndarray:
        return np.array([float(getattr(self, n)) for n in self.NAMES])

    def as_tuple(self) -> tuple[bool, ...]:
        return tuple(getattr(self, n) for n in self.NAMES)


@dataclass(frozen=True)
class TargetContext:
    """A target numeral located inside a normalized, tokenized tweet."""

    tweet: NormalizedTweet
    surface: str
    first: int  # first token index covering the target
    last: int  # last token index covering the target
    chunk_before: str  # within the whitespace chunk, text left of the target
    chunk_after: str  # within the whitespace chunk, text right of the target

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.tweet.tokens

    def next_token(self) -> Optional[str]:
        if self.last + 1 < len(self.tokens):
            return self.tokens[self.last + 1]
        return None

    def prev_token(self) -> Optional[str]:
        if self.first > 0:
            return self.tokens[self.first - 1]
        return None


def target_context(tweet: NormalizedTweet, offset: int, length: int) -> TargetContext:
    n_start, n_end = tweet.project_span(offset, length)
    first, last = tweet.token_range(offset, length)
    text = tweet.normalized
    cs = n_start
    while cs > 0 and not text[cs - 1].isspace():
        cs -= 1
    ce = n_end
    while ce < len(text) and not text[ce].isspace():
        ce += 1
    return TargetContext(
        tweet=tweet,
        surface=tweet.original[offset : offset + length],
        first=first,
        last=last,
        chunk_before=text[cs:n_start],
        chunk_after=text[n_end:ce],
    )


class FeatureExtractor:
    def __init__(
        self,
        tables: Optional[KeywordTables] = None,
        noun_test: Optional[Callable[[str], bool]] = None,
    ):
        self.tables = tables or _default_tables()
        if noun_test is None:
            lexicon = _default_nouns()
            noun_test = lambda token: _strip_plural(token.casefold()) in lexicon
        self.noun_test = noun_test

    # -- individual features --------------------------------------------

    def percentage(self, ctx: TargetContext) -> tuple[bool, bool]:
        """(percentage, relative); "absolute" is percentage and not relative."""
        nxt = ctx.next_token()
        pct = bool(
            (nxt is not None and _match(nxt, self.tables.key_p))
            or ctx.chunk_after.startswith("%")
        )
        if not pct:
            return False, False
        lo = max(0, ctx.first - RELATIVE_WINDOW)
        hi = min(len(ctx.tokens), ctx.last + 1 + RELATIVE_WINDOW)
        rel = any(
            self._is_relative_marker(ctx.tokens[i])
            for i in range(lo, hi)
            if not ctx.first <= i <= ctx.last
        )
        return pct, rel

    def _is_relative_marker(self, token: str) -> bool:
        t = token.casefold()
        if t in self.tables.key_r:
            return True
        # signed numerals ("+D.DD") carry the +/- markers of the table
        if len(t) > 1 and t[0] in "+-" and _NUMERAL_TOKEN_RE.fullmatch(token):
            return True
        for kw in self.tables.key_r:
            if kw.isalpha() and len(kw) >= 4:
                stem = kw[:-1] if kw.endswith("e") else kw
                if t in (kw + "s", kw + "ed", kw + "d", stem + "ing"):
                    return True
        return False

    def option(self, ctx: TargetContext) -> tuple[bool, bool]:
        """(exercise, maturity): requires call/put later in the tweet; the
        numeral is a maturity only when a month name abuts it on the left."""
        if not any(t.casefold() in CALL_PUT for t in ctx.tokens[ctx.last + 1 :]):
            return False, False
        month = False
        prev = ctx.prev_token()
        if prev is not None and _match(prev, self.tables.key_m):
            month = True
        else:
            # attached month, as in "apr.22": the chunk left of the numeral
            # ends in a month name, possibly followed by punctuation
            tail = re.search(r"[A-Za-z]+(?=[^A-Za-z]*$)", ctx.chunk_before)
            if tail is not None and _match(tail.group(), self.tables.key_m):
                month = True
        return (not month, month)

    def indicator(self, ctx: TargetContext) -> bool:
        attached = re.match(r"[A-Za-z]+", ctx.chunk_after.lstrip("-"))
        if attached is not None and _match(attached.group(), self.tables.key_i):
            return True
        for tok in ctx.tokens[ctx.last + 1 :]:
            if tok in _INDICATOR_SKIP or _NUMERAL_TOKEN_RE.fullmatch(tok):
                continue
            if _match(tok, self.tables.key_i):
                return True
            bare = tok.lstrip("D0123456789")
            return bool(bare) and _match(bare, self.tables.key_i)
        return False

    def temporal(self, ctx: TargetContext) -> tuple[bool, bool]:
        nxt = ctx.next_token()
        date = nxt is not None and (_match(nxt, self.tables.key_d) or _match(nxt, self.tables.key_m))
        time = nxt is not None and _match(nxt, self.tables.key_t)
        if not date:
            date = bool(
                _SLASH_DATE_RE.fullmatch(ctx.surface) or _DASH_DATE_RE.fullmatch(ctx.surface)
            )
        if not date and ctx.chunk_before.casefold() in ("q", "h") and not ctx.chunk_after:
            date = True  # quarter / half-year markers: Q1..Q4, H1, H2
        return date, time

    def quantity(self, ctx: TargetContext) -> bool:
        nxt = ctx.next_token()
        if nxt is None or not nxt[0].isalpha():
            return False
        if self._claimed(nxt):
            return False
        return self.noun_test(nxt)

    def _claimed(self, token: str) -> bool:
        t = self.tables
        if token.casefold() in CALL_PUT:
            return True
        return any(
            _match(token, table)
            for table in (t.key_p, t.key_r, t.key_m, t.key_i, t.key_d, t.key_t)
        )

    # -- assembly --------------------------------------------------------

    def extract(self, ctx: TargetContext) -> FeatureVector:
        pct, rel = self.percentage(ctx)
        exercise, maturity = self.option(ctx)
        date, time = self.temporal(ctx)
        return FeatureVector(
            percentage=pct,
            relative=rel,
            exercise=exercise,
            maturity=maturity,
            indicator=self.indicator(ctx),
            date=date,
            time=time,
            quantity=self.quantity(ctx),
        )


def _context_for(text: str, offset: int, length: int) -> TargetContext:
    return target_context(normalize(text), offset, length)


def feat_percentage(text: str, offset: int, length: int) -> tuple[bool, bool]:
    return FeatureExtractor().percentage(_context_for(text, offset, length))


def feat_option(text: str, offset: int, length: int) -> tuple[bool, bool]:
    return FeatureExtractor().option(_context_for(text, offset, length))


def feat_indicator(text: str, offset: int, length: int) -> bool:
    return FeatureExtractor().indicator(_context_for(text, offset, length))


def feat_temporal(text: str, offset: int, length: int) -> tuple[bool, bool]:
    return FeatureExtractor().temporal(_context_for(text, offset, length))


def feat_quantity(text: str, offset: int, length: int) -> bool:
    return FeatureExtractor().quantity(_context_for(text, offset, length))


def extract_features(text: str, offset: int, length: int) -> FeatureVector:
    return FeatureExtractor().extract(_context_for(text, offset, length))
