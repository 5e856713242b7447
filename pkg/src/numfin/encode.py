"""Model input construction: bag-of-words and char/word matrices.

The linear baseline sees a binary bag-of-words over the training-fold
vocabulary concatenated with the 8 context features. The convolutional
models see a fixed-length matrix per sample: one row per character (140)
or per token (25), each row holding the text part (a 102-way one-hot or
a 250-dim embedding), a target-position indicator column, and the 8
features duplicated down every row.

Inputs longer than the fixed length are truncated to the prefix; when the
target numeral would fall outside, the window is recentered on the target
instead, so a valid target always survives encoding.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .embed import EmbeddingTable
from .features import FeatureExtractor, target_context
from .textprep import CharAlphabet, NormalizedTweet, default_alphabet, normalize

logger = logging.getLogger(__name__)

CHAR_ROWS = 140
WORD_ROWS = 25


@lru_cache(maxsize=65536)
def normalized(text: str) -> NormalizedTweet:
    """Memoized normalization; safe because normalize is pure."""
    return normalize(text)


def build_vocabulary(texts: Iterable[str]) -> dict[str, int]:
    """Sorted token vocabulary over normalized tweets (one id per token)."""
    tokens = set()
    for text in texts:
        tokens.update(normalized(text).tokens)
    return {t: i for i, t in enumerate(sorted(tokens))}


@dataclass(frozen=True)
class BowSample:
    bow: np.ndarray  # |vocab| binary entries
    features: np.ndarray  # 8 values in {0, 1}
    label: Optional[str] = None

    def concatenated(self) -> np.ndarray:
        return np.concatenate([self.bow, self.features])


def encode_bow(
    text: str,
    offset: int,
    length: int,
    vocab: dict[str, int],
    extractor: Optional[FeatureExtractor] = None,
    label: Optional[str] = None,
) -> BowSample:
    extractor = extractor or FeatureExtractor()
    tweet = normalized(text)
    bow = np.zeros(len(vocab))
    for token in tweet.tokens:
        idx = vocab.get(token)
        if idx is not None:
            bow[idx] = 1.0
    ctx = target_context(tweet, offset, length)
    return BowSample(bow=bow, features=extractor.extract(ctx).as_array(), label=label)


def _window(start: int, end: int, total: int, rows: int, what: str) -> int:
    """Start of the encoding window: prefix unless the target would be cut."""
    if end - start > rows:
        raise ValueError(f"target {what} span of {end - start} exceeds capacity {rows}")
    if total <= rows or end <= rows:
        if total > rows:
            logger.warning("%s input of %d truncated to %d", what, total, rows)
        return 0
    center = (start + end) // 2
    win = min(max(0, center - rows // 2), total - rows)
    win = min(win, start)  # never cut the front of the target
    win = max(win, end - rows)
    logger.warning("%s input of %d recentered on target at %d", what, total, win)
    return win


def encode_char(
    text: str,
    offset: int,
    length: int,
    extractor: Optional[FeatureExtractor] = None,
    alphabet: Optional[CharAlphabet] = None,
) -> np.ndarray:
    """(140, 111) matrix: char one-hots, target indicator, repeated features."""
    extractor = extractor or FeatureExtractor()
    alphabet = alphabet or default_alphabet()
    tweet = normalized(text)
    n_start, n_end = tweet.project_span(offset, length)
    win = _window(n_start, n_end, len(tweet.normalized), CHAR_ROWS, "char")

    width = len(alphabet) + 1 + 8
    matrix = np.zeros((CHAR_ROWS, width))
    for row, pos in enumerate(range(win, min(win + CHAR_ROWS, len(tweet.normalized)))):
        idx = alphabet.index(tweet.normalized[pos])
        if idx is not None:
            matrix[row, idx] = 1.0
        if n_start <= pos < n_end:
            matrix[row, len(alphabet)] = 1.0
    ctx = target_context(tweet, offset, length)
    matrix[:, len(alphabet) + 1 :] = extractor.extract(ctx).as_array()
    return matrix


def encode_word(
    text: str,
    offset: int,
    length: int,
    embedding: EmbeddingTable,
    extractor: Optional[FeatureExtractor] = None,
) -> np.ndarray:
    """(25, dim + 9) matrix: token embeddings, target indicator, features."""
    extractor = extractor or FeatureExtractor()
    tweet = normalized(text)
    first, last = tweet.token_range(offset, length)
    win = _window(first, last + 1, len(tweet.tokens), WORD_ROWS, "word")

    width = embedding.dim + 1 + 8
    matrix = np.zeros((WORD_ROWS, width))
    for row, pos in enumerate(range(win, min(win + WORD_ROWS, len(tweet.tokens)))):
        matrix[row, : embedding.dim] = embedding.lookup(tweet.tokens[pos])
        if first <= pos <= last:
            matrix[row, embedding.dim] = 1.0
    ctx = target_context(tweet, offset, length)
    matrix[:, embedding.dim + 1 :] = extractor.extract(ctx).as_array()
    return matrix
