"""Skip-gram word embeddings with negative sampling.

Trains 250-dimensional vectors over a digit-masked token corpus so that
numeral patterns like "D/DD" and "D,DDD" are first-class vocabulary
entries. Training is plain SGD over the negative-sampling objective with
a linearly decaying learning rate and is bit-reproducible for a fixed
seed. Out-of-vocabulary lookups return a deterministic unit-norm vector
derived from the token string, so distinct unseen patterns stay apart.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DIM = 250


class EmbeddingFormatError(ValueError):
    """An embedding file does not match the expected layout."""


@dataclass
class EmbeddingTable:
    vocabulary: dict[str, int]
    matrix: np.ndarray  # |V| x dim, float64
    dim: int

    def __post_init__(self) -> None:
        if self.matrix.shape != (len(self.vocabulary), self.dim):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match "
                f"({len(self.vocabulary)}, {self.dim})"
            )
        if not np.isfinite(self.matrix).all():
            raise ValueError("embedding matrix contains non-finite values")

    def __contains__(self, token: str) -> bool:
        return token in self.vocabulary

    def __len__(self) -> int:
        return len(self.vocabulary)

    def lookup(self, token: str) -> np.ndarray:
        row = self.vocabulary.get(token)
        if row is not None:
            return self.matrix[row]
        return oov_vector(token, self.dim)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vocabulary)} {self.dim}\n")
            for token, row in sorted(self.vocabulary.items(), key=lambda kv: kv[1]):
                if any(c.isspace() for c in token):
                    raise ValueError(f"token {token!r} contains whitespace")
                values = " ".join(repr(v) for v in self.matrix[row])
                fh.write(f"{token} {values}\n")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise EmbeddingFormatError("missing '<vocab> <dim>' header")
            try:
                n, dim = int(header[0]), int(header[1])
            except ValueError:
                raise EmbeddingFormatError(f"bad header {header!r}") from None
            vocabulary: dict[str, int] = {}
            matrix = np.empty((n, dim))
            for i in range(n):
                line = fh.readline()
                if not line:
                    raise EmbeddingFormatError(f"truncated file: {i} of {n} rows")
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise EmbeddingFormatError(f"row {i}: expected {dim} values, got {len(parts) - 1}")
                vocabulary[parts[0]] = i
                matrix[i] = [float(v) for v in parts[1:]]
        return cls(vocabulary=vocabulary, matrix=matrix, dim=dim)


def oov_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic unit-norm pseudo-random vector for an unseen token."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def train_skipgram(
    corpus: Sequence[Sequence[str]],
    dim: int = DEFAULT_DIM,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    seed: int = 0,
    learning_rate: float = 0.025,
    min_count: int = 1,
) -> EmbeddingTable:
    """Train skip-gram embeddings over an already-normalized token corpus.

    The corpus is a sequence of token sequences (one per tweet). Context
    windows are sampled uniformly in [1, window] per position, negatives
    from the unigram distribution raised to 3/4. The learning rate decays
    linearly over all scheduled updates.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    if window < 1 or negatives < 1:
        raise ValueError("window and negatives must be >= 1")
    sentences = [list(s) for s in corpus if len(s) > 0]
    if not sentences:
        raise ValueError("empty corpus")

    counts = Counter(t for s in sentences for t in s)
    items = [t for t, c in counts.items() if c >= min_count]
    items.sort(key=lambda t: (-counts[t], t))
    if not items:
        raise ValueError("no token meets min_count")
    vocabulary = {t: i for i, t in enumerate(items)}

    rng = np.random.default_rng(seed)
    w_in = (rng.random((len(items), dim)) - 0.5) / dim
    w_out = np.zeros((len(items), dim))

    freq = np.array([counts[t] for t in items], dtype=float) ** 0.75
    noise = freq / freq.sum()

    total_positions = sum(len(s) for s in sentences) * epochs
    min_lr = learning_rate * 1e-4
    done = 0
    for _ in range(epochs):
        for sent in sentences:
            ids = [vocabulary[t] for t in sent if t in vocabulary]
            for i, center in enumerate(ids):
                lr = max(learning_rate * (1.0 - done / total_positions), min_lr)
                done += 1
                b = int(rng.integers(1, window + 1))
                lo, hi = max(0, i - b), min(len(ids), i + b + 1)
                for j in range(lo, hi):
                    if j == i:
                        continue
                    context = ids[j]
                    targets = np.empty(negatives + 1, dtype=np.int64)
                    targets[0] = context
                    targets[1:] = rng.choice(len(items), size=negatives, p=noise)
                    labels = np.zeros(negatives + 1)
                    labels[0] = 1.0
                    v = w_in[center]
                    rows = w_out[targets]
                    g = (labels - _sigmoid(rows @ v)) * lr
                    dv = g @ rows
                    np.add.at(w_out, targets, np.outer(g, v))  # targets may repeat
                    w_in[center] += dv
    return EmbeddingTable(vocabulary=vocabulary, matrix=w_in, dim=dim)
