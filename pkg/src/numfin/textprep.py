"""Tweet normalization, tokenization, and numeral-span detection.

The normalization pipeline runs four steps in a fixed order: (1) user
handles, cashtags and URLs are replaced by the placeholder words ID,
TICKER and URL; (2) every digit of every detected numeral is masked with
the reserved character "D"; (3) characters outside the 102-character
alphabet are removed; (4) remaining text is lowercased. The placeholder
words and the mask character are case-protected so the pipeline is
idempotent and so numeral patterns like "D/DD" stay recognizable.

A side effect of the reserved symbols: a bare uppercase "D", or the bare
words ID/TICKER/URL in the original tweet, survive lowercasing. Keyword
matching downstream casefolds, so this does not affect feature extraction.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Optional

MASK_CHAR = "D"
PLACEHOLDER_HANDLE = "ID"
PLACEHOLDER_CASHTAG = "TICKER"
PLACEHOLDER_URL = "URL"

ALPHABET_SIZE = 102


class CharAlphabet:
    """Ordered 102-character set with index lookup; '0' is at index 0."""

    def __init__(self, chars: Iterable[str]):
        self.chars = tuple(chars)
        if len(self.chars) != len(set(self.chars)):
            raise ValueError("alphabet contains duplicate characters")
        self._index = {c: i for i, c in enumerate(self.chars)}

    def __len__(self) -> int:
        return len(self.chars)

    def __contains__(self, c: str) -> bool:
        return c in self._index

    def index(self, c: str) -> Optional[int]:
        return self._index.get(c)


_ESCAPES = {"\\s": " ", "\\t": "\t", "\\n": "\n", "\\\\": "\\"}


def load_alphabet(path=None) -> CharAlphabet:
    """Read a one-character-per-line alphabet file (layout chars escaped)."""
    if path is None:
        text = resources.files("numfin.resources").joinpath("char_alphabet.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    chars = []
    for line in text.split("\n"):
        if not line:
            continue
        if line in _ESCAPES:
            chars.append(_ESCAPES[line])
        elif len(line) == 1:
            chars.append(line)
        else:
            raise ValueError(f"malformed alphabet line {line!r}")
    alphabet = CharAlphabet(chars)
    if len(alphabet) != ALPHABET_SIZE:
        raise ValueError(f"alphabet has {len(alphabet)} characters, expected {ALPHABET_SIZE}")
    return alphabet


@lru_cache(maxsize=1)
def default_alphabet() -> CharAlphabet:
    return load_alphabet()


def char_index(c: str) -> Optional[int]:
    """Index of a character in the default alphabet, or None if absent."""
    return default_alphabet().index(c)


# --- numeral detection -------------------------------------------------

# Regions that never contain numerals of interest. Cashtags whose symbol is
# made solely of the mask character (e.g. "$DD") are skipped so that masked
# currency amounts are not re-replaced on a second normalization pass.
_REPLACE_RE = re.compile(
    r"(?P<url>https?://\S+|www\.\S+)"
    r"|(?P<handle>@\w+)"
    r"|(?P<cashtag>\$[A-Za-z][A-Za-z._]*)"
)

# Alternatives ordered: comma groups, slash dates/fractions, three-part
# dash dates, decimals, bare-dot decimals, plain integers. Two-part dashed
# numbers ("197-230") deliberately fall through to two integer matches:
# they are range endpoints, not dates.
_NUMERAL_CORE_RE = re.compile(
    r"\d{1,3}(?:,\d{3})+(?:\.\d+)?"
    r"|\d+(?:/\d+)+"
    r"|\d{1,4}-\d{1,2}-\d{2,4}"
    r"|\d+\.\d+"
    r"|(?<![0-9A-Za-z])\.\d+"
    r"|\d+"
)

_DIGIT_RUN_RE = re.compile(r"\d+")


def _is_mask_only_cashtag(match: re.Match) -> bool:
    return match.lastgroup == "cashtag" and set(match.group()[1:]) <= {MASK_CHAR, "."}


def detect_numerals(text: str) -> list[tuple[int, int, str]]:
    """Find numeral spans as (offset, length, surface), ordered by offset.

    Covers signed integers and decimals, comma-grouped numbers, slash and
    three-part dash dates, and range endpoints ("274-279" yields two
    spans). Digits embedded in alphanumeric chunks ("5dma", "iphone7",
    "Q1") yield spans covering just the digit run. Numerals inside URLs,
    user handles and cashtags are ignored.
    """
    shadow = list(text)
    for m in _REPLACE_RE.finditer(text):
        if _is_mask_only_cashtag(m):
            continue
        for i in range(m.start(), m.end()):
            shadow[i] = " "
    masked = "".join(shadow)

    spans: list[tuple[int, int]] = []
    for m in _NUMERAL_CORE_RE.finditer(masked):
        start, end = m.start(), m.end()
        before = masked[start - 1] if start > 0 else ""
        after = masked[end] if end < len(masked) else ""
        if before.isalpha() or after.isalpha():
            # embedded in an alphanumeric chunk: keep only the digit runs
            for dm in _DIGIT_RUN_RE.finditer(m.group()):
                spans.append((start + dm.start(), len(dm.group())))
            continue
        if before in "+-":
            prior = masked[start - 2] if start >= 2 else ""
            if not (prior.isalnum() or prior in ".,"):
                start -= 1  # sign prefix belongs to the numeral
        spans.append((start, end - start))
    return [(off, length, text[off : off + length]) for off, length in spans]


# --- tokenization ------------------------------------------------------

# Alternatives ordered: dotted abbreviations (p.m.), signed numeral cores,
# unsigned numeral cores, words (which may embed digits, hyphens and
# apostrophes), digit-led alphanumeric runs (5dma), single symbols. "D" is
# treated as a digit so masked patterns tokenize like the raw ones. A sign
# counts as part of a numeral only when not preceded by an alphanumeric,
# which keeps range dashes ("DDD-DDD") as separators.
_TOKEN_RE = re.compile(
    r"(?:[A-Za-z]\.){2,}"
    r"|(?<![0-9A-Za-z])[+-][0-9D]+(?:[.,/:][0-9D]+)*(?![0-9A-Za-z])"
    r"|[0-9D]+(?:[.,/:][0-9D]+)*(?![0-9A-Za-z])"
    r"|[A-Za-z](?:[A-Za-z0-9'’_-]*[A-Za-z0-9])?"
    r"|[0-9][0-9A-Za-z]*"
    r"|\S"
)


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def tokenize(text: str) -> list[str]:
    """Split text into tokens, separating punctuation from word and
    numeral cores but keeping decimal points, comma groups, date slashes
    and sign prefixes inside numerals."""
    return [m.group() for m in _TOKEN_RE.finditer(text)]


# --- normalization -----------------------------------------------------

_PLACEHOLDER_TOKEN_RE = re.compile(r"(?<![A-Za-z0-9])(?:ID|TICKER|URL)(?![A-Za-z0-9])")


@dataclass(frozen=True)
class NormalizedTweet:
    original: str
    normalized: str
    tokens: tuple[str, ...]
    token_spans: tuple[tuple[int, int], ...]  # (start, end) in normalized text
    char_map: tuple[int, ...]  # normalized index -> original index, monotone
    numeral_spans: tuple[tuple[int, int], ...]  # (offset, length) in original text

    def project_span(self, offset: int, length: int) -> tuple[int, int]:
        """Map an original-text span to (start, end) in the normalized text."""
        idx = [i for i, m in enumerate(self.char_map) if offset <= m < offset + length]
        if not idx:
            raise ValueError(f"span ({offset},{length}) does not survive normalization")
        return idx[0], idx[-1] + 1

    def token_range(self, offset: int, length: int) -> tuple[int, int]:
        """Indices (first, last) of tokens overlapping an original-text span."""
        start, end = self.project_span(offset, length)
        hit = [i for i, (s, e) in enumerate(self.token_spans) if s < end and e > start]
        if not hit:
            raise ValueError(f"span ({offset},{length}) maps to no token")
        return hit[0], hit[-1]


def normalize(text: str) -> NormalizedTweet:
    """Run the full normalization pipeline over one tweet.

    Total function: any input produces a NormalizedTweet. The char_map
    relates normalized positions back to the original text (placeholder
    characters all map to the start of the span they replaced).
    """
    # step 1: placeholder replacement
    pieces: list[list] = []  # [char, original index, protected]
    pos = 0
    for m in _REPLACE_RE.finditer(text):
        for i in range(pos, m.start()):
            pieces.append([text[i], i, False])
        if _is_mask_only_cashtag(m):
            for i in range(m.start(), m.end()):
                pieces.append([text[i], i, False])
        else:
            word = {
                "url": PLACEHOLDER_URL,
                "handle": PLACEHOLDER_HANDLE,
                "cashtag": PLACEHOLDER_CASHTAG,
            }[m.lastgroup]
            for ch in word:
                pieces.append([ch, m.start(), True])
        pos = m.end()
    for i in range(pos, len(text)):
        pieces.append([text[i], i, False])

    # step 2: digit masking inside detected numerals
    replaced = "".join(p[0] for p in pieces)
    numeral_spans = []
    for offset, length, _ in detect_numerals(replaced):
        first, last = pieces[offset], pieces[offset + length - 1]
        numeral_spans.append((first[1], last[1] - first[1] + 1))
        for j in range(offset, offset + length):
            if pieces[j][0].isdigit():
                pieces[j][0] = MASK_CHAR
                pieces[j][2] = True

    # step 3: drop characters outside the alphabet (emoji removal)
    alphabet = default_alphabet()
    pieces = [p for p in pieces if p[0] in alphabet]

    # step 4: lowercase, preserving placeholders and the mask character
    current = "".join(p[0] for p in pieces)
    for m in _PLACEHOLDER_TOKEN_RE.finditer(current):
        for j in range(m.start(), m.end()):
            pieces[j][2] = True
    out = []
    for ch, _, protected in pieces:
        if not protected and ch != MASK_CHAR:
            ch = ch.lower()
        out.append(ch)
    normalized = "".join(out)

    token_spans = tokenize_with_spans(normalized)
    return NormalizedTweet(
        original=text,
        normalized=normalized,
        tokens=tuple(t for t, _, _ in token_spans),
        token_spans=tuple((s, e) for _, s, e in token_spans),
        char_map=tuple(p[1] for p in pieces),
        numeral_spans=tuple(numeral_spans),
    )
