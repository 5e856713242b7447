"""Classifier zoo: majority baseline, linear one-vs-rest, char/word CNNs,
per-category binary variants, and the two-stage pipeline.

Every classifier consumes `Sample` records (tweet text plus target span)
and produces label strings from its declared codec, so model kinds are
interchangeable anywhere a classifier is expected. Fold-dependent state
(the bag-of-words vocabulary) is built inside `fit` from the training
samples only.
"""
from __future__ import annotations

import hashlib
import json
import shutil
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import encode, nn
from .embed import EmbeddingTable
from .features import FeatureExtractor
from .taxonomy import CATEGORY_LEAVES, Category, Dataset, Subcategory

TASK1 = "task1"
TASK2 = "task2"

CATEGORY_ORDER = tuple(c.value for c in Category)
SUBCATEGORY_ORDER = tuple(s.value for s in Subcategory)

# Categories with more than one leaf get a dedicated second-stage model;
# the rest map straight onto their sole leaf.
MULTI_LEAF = tuple(c.value for c in Category if len(CATEGORY_LEAVES[c]) > 1)
SOLE_LEAF = {
    c.value: CATEGORY_LEAVES[c][0].value for c in Category if len(CATEGORY_LEAVES[c]) == 1
}

BUNDLE_FORMAT = "numfin-model.v1"


@dataclass(frozen=True)
class Sample:
    tweet_id: str
    text: str
    offset: int
    length: int
    category: Optional[str] = None
    subcategory: Optional[str] = None

    def label(self, task: str) -> str:
        value = self.category if task == TASK1 else self.subcategory
        if value is None:
            raise ValueError(f"sample {self.tweet_id}:{self.offset} lacks a {task} label")
        return value


def samples_from_dataset(dataset: Dataset) -> list[Sample]:
    by_id = {t.tweet_id: t.text for t in dataset.tweets}
    return [
        Sample(
            tweet_id=inst.tweet_id,
            text=by_id[inst.tweet_id],
            offset=inst.offset,
            length=inst.length,
            category=inst.category.value,
            subcategory=inst.subcategory.value if inst.subcategory else None,
        )
        for inst in dataset.instances
    ]


@dataclass(frozen=True)
class LabelCodec:
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(set(self.labels)):
            raise ValueError("duplicate labels in codec")

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"label {label!r} outside codec {self.labels}") from None

    def indices(self, labels: Sequence[str]) -> np.ndarray:
        return np.array([self.index(l) for l in labels], dtype=np.int64)

    @classmethod
    def for_task(cls, task: str) -> "LabelCodec":
        if task == TASK1:
            return cls(CATEGORY_ORDER)
        if task == TASK2:
            return cls(SUBCATEGORY_ORDER)
        raise ValueError(f"unknown task {task!r}")

    @classmethod
    def binary(cls, category: str) -> "LabelCodec":
        return cls(("other", category))

    @classmethod
    def subtask(cls, category: str) -> "LabelCodec":
        leaves = CATEGORY_LEAVES[Category(category)]
        return cls(tuple(s.value for s in leaves))


# --- majority baseline ----------------------------------------------------


class GmClassifier:
    """Predicts the modal training label for every input; ties break to the
    lexicographically smallest label."""

    kind = "gm"

    def __init__(self, codec: LabelCodec):
        self.codec = codec
        self.modal: Optional[str] = None

    def fit(self, labels: Sequence[str]) -> "GmClassifier":
        if not labels:
            raise ValueError("no training labels")
        counts = Counter(labels)
        best = max(counts.values())
        self.modal = min(l for l, c in counts.items() if c == best)
        self.codec.index(self.modal)
        return self

    def predict(self, samples: Sequence[Sample]) -> list[str]:
        if self.modal is None:
            raise RuntimeError("classifier is not fitted")
        return [self.modal] * len(samples)


def gm_fit(labels: Sequence[str], codec: LabelCodec) -> GmClassifier:
    return GmClassifier(codec).fit(labels)


# --- linear one-vs-rest baseline -------------------------------------------


@dataclass
class LinearConfig:
    epochs: int = 30
    l2: float = 1e-4
    seed: int = 0


class LinearClassifier:
    """Max-margin linear one-vs-rest over bag-of-words plus features,
    trained by the projected subgradient method on the hinge loss."""

    kind = "linear"

    def __init__(self, codec: LabelCodec, config: Optional[LinearConfig] = None):
        self.codec = codec
        self.config = config or LinearConfig()
        self.vocab: Optional[dict[str, int]] = None
        self.weights: Optional[np.ndarray] = None  # (n_classes, dim + 9)
        self.extractor = FeatureExtractor()

    def _matrix(self, samples: Sequence[Sample]) -> np.ndarray:
        rows = [
            encode.encode_bow(s.text, s.offset, s.length, self.vocab, self.extractor).concatenated()
            for s in samples
        ]
        x = np.stack(rows)
        return np.hstack([x, np.ones((len(x), 1))])  # bias column

    def fit(self, samples: Sequence[Sample], labels: Sequence[str]) -> "LinearClassifier":
        y_all = self.codec.indices(labels)
        if len(set(y_all.tolist())) < 2:
            raise ValueError("training data contains a single class")
        self.vocab = encode.build_vocabulary(s.text for s in samples)
        x = self._matrix(samples)
        n, dim = x.shape
        lam = self.config.l2
        rng = np.random.default_rng(self.config.seed)
        self.weights = np.zeros((len(self.codec), dim))
        for cls in range(len(self.codec)):
            y = np.where(y_all == cls, 1.0, -1.0)
            w = np.zeros(dim)
            t = 0
            for _ in range(self.config.epochs):
                for i in rng.permutation(n):
                    t += 1
                    eta = 1.0 / (lam * t)
                    margin = y[i] * (w @ x[i])
                    w *= 1.0 - eta * lam
                    if margin < 1.0:
                        w += eta * y[i] * x[i]
            self.weights[cls] = w
        return self

    def decision_values(self, samples: Sequence[Sample]) -> np.ndarray:
        if self.weights is None or self.vocab is None:
            raise RuntimeError("classifier is not fitted")
        return self._matrix(samples) @ self.weights.T

    def predict(self, samples: Sequence[Sample]) -> list[str]:
        scores = self.decision_values(samples)
        return [self.codec.labels[i] for i in scores.argmax(axis=1)]


def linear_fit(
    samples: Sequence[Sample],
    labels: Sequence[str],
    codec: LabelCodec,
    config: Optional[LinearConfig] = None,
) -> LinearClassifier:
    return LinearClassifier(codec, config).fit(samples, labels)


# --- convolutional classifier ----------------------------------------------


@dataclass
class CnnArchitecture:
    filters: int = 64
    kernel_width: int = 3
    hidden: int = 64
    dropout: float = 0.5


class _CnnCore:
    """conv -> global maxpool -> dense(hidden) -> dropout -> ReLU -> softmax."""

    def __init__(self, channels: int, n_classes: int, arch: CnnArchitecture, rng: np.random.Generator):
        self.arch = arch
        k, w, h = arch.filters, arch.kernel_width, arch.hidden
        self.params = {
            "conv_w": rng.standard_normal((k, w, channels)) * np.sqrt(2.0 / (w * channels)),
            "conv_b": np.zeros(k),
            "h_w": rng.standard_normal((h, k)) * np.sqrt(2.0 / k),
            "h_b": np.zeros(h),
            "out_w": rng.standard_normal((n_classes, h)) * np.sqrt(2.0 / h),
            "out_b": np.zeros(n_classes),
        }

    def _forward(self, x, rng=None, train=False):
        p = self.params
        z = nn.conv1d_forward(x, p["conv_w"], p["conv_b"])
        pooled, argmax = nn.global_maxpool_forward(z)
        hidden = nn.dense_forward(pooled, p["h_w"], p["h_b"])
        dropped, mask = nn.dropout_forward(hidden, self.arch.dropout, rng, train)
        activated = nn.relu_forward(dropped)
        logits = nn.dense_forward(activated, p["out_w"], p["out_b"])
        cache = (x, z, argmax, pooled, hidden, dropped, mask, activated)
        return logits, cache

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self._forward(x, train=False)[0]

    def batch_loss(self, xb: np.ndarray, yb: np.ndarray) -> float:
        return nn.softmax_crossentropy(self.logits(xb), yb)[0]

    def loss_and_grads(self, xb, yb, rng):
        p = self.params
        logits, cache = self._forward(xb, rng=rng, train=True)
        x, z, argmax, pooled, hidden, dropped, mask, activated = cache
        loss, dlogits = nn.softmax_crossentropy(logits, yb)
        dact, d_out_w, d_out_b = nn.dense_backward(activated, p["out_w"], dlogits)
        ddropped = nn.relu_backward(dropped, dact)
        dhidden = nn.dropout_backward(ddropped, mask)
        dpooled, d_h_w, d_h_b = nn.dense_backward(pooled, p["h_w"], dhidden)
        dz = nn.global_maxpool_backward(z, argmax, dpooled)
        _, d_conv_w, d_conv_b = nn.conv1d_backward(x, p["conv_w"], dz)
        grads = {
            "conv_w": d_conv_w,
            "conv_b": d_conv_b,
            "h_w": d_h_w,
            "h_b": d_h_b,
            "out_w": d_out_w,
            "out_b": d_out_b,
        }
        return loss, grads


class CnnClassifier:
    """Character- or word-scheme convolutional classifier."""

    def __init__(
        self,
        scheme: str,
        codec: LabelCodec,
        config: Optional[nn.TrainConfig] = None,
        arch: Optional[CnnArchitecture] = None,
        embedding: Optional[EmbeddingTable] = None,
    ):
        if scheme not in ("char", "word"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if scheme == "word" and embedding is None:
            raise ValueError("word scheme requires an embedding table")
        self.scheme = scheme
        self.codec = codec
        self.config = config or nn.TrainConfig()
        self.arch = arch or CnnArchitecture()
        self.embedding = embedding
        self.extractor = FeatureExtractor()
        self.core: Optional[_CnnCore] = None
        self.history: Optional[nn.TrainHistory] = None

    @property
    def kind(self) -> str:
        return f"{self.scheme}_cnn"

    def _encode(self, sample: Sample) -> np.ndarray:
        if self.scheme == "char":
            return encode.encode_char(sample.text, sample.offset, sample.length, self.extractor)
        return encode.encode_word(
            sample.text, sample.offset, sample.length, self.embedding, self.extractor
        )

    def encode_batch(self, samples: Sequence[Sample]) -> np.ndarray:
        return np.stack([self._encode(s) for s in samples])

    def fit(self, samples: Sequence[Sample], labels: Sequence[str]) -> "CnnClassifier":
        x = self.encode_batch(samples)
        y = self.codec.indices(labels)
        rng = np.random.default_rng([self.config.seed, 17])
        self.core = _CnnCore(x.shape[-1], len(self.codec), self.arch, rng)
        self.history = nn.train(self.core, x, y, self.config)
        return self

    def predict(self, samples: Sequence[Sample], batch_size: int = 256) -> list[str]:
        if self.core is None:
            raise RuntimeError("classifier is not fitted")
        out: list[str] = []
        for start in range(0, len(samples), batch_size):
            x = self.encode_batch(samples[start : start + batch_size])
            out.extend(self.codec.labels[i] for i in self.core.logits(x).argmax(axis=1))
        return out


def cnn_fit(
    samples: Sequence[Sample],
    labels: Sequence[str],
    scheme: str,
    codec: LabelCodec,
    config: Optional[nn.TrainConfig] = None,
    embedding: Optional[EmbeddingTable] = None,
    arch: Optional[CnnArchitecture] = None,
) -> CnnClassifier:
    return CnnClassifier(scheme, codec, config, arch, embedding).fit(samples, labels)


# --- binary per-category variant --------------------------------------------


def binary_labels(samples: Sequence[Sample], category: str, task: str = TASK1) -> list[str]:
    return [category if s.label(TASK1) == category else "other" for s in samples]


def binary_fit(
    category: str,
    samples: Sequence[Sample],
    kind: str = "linear",
    config=None,
    embedding: Optional[EmbeddingTable] = None,
):
    """Fit an in-category-vs-rest classifier of any model kind."""
    codec = LabelCodec.binary(category)
    labels = binary_labels(samples, category)
    if len(set(labels)) < 2:
        raise ValueError("binary training data contains a single class")
    if kind == "gm":
        return gm_fit(labels, codec)
    if kind == "linear":
        return linear_fit(samples, labels, codec, config)
    if kind in ("char_cnn", "word_cnn"):
        return cnn_fit(samples, labels, kind.split("_")[0], codec, config, embedding)
    raise ValueError(f"unknown model kind {kind!r}")


# --- two-stage pipeline ------------------------------------------------------


@dataclass
class Pipeline:
    """Stage 1 picks the category; stage 2 picks the leaf for categories
    with multiple subcategories, the rest pass through to their sole leaf."""

    stage1: object
    stage2: dict[str, object]

    def __post_init__(self) -> None:
        missing = set(MULTI_LEAF) - set(self.stage2)
        if missing:
            raise ValueError(f"stage 2 lacks classifiers for {sorted(missing)}")

    def predict(self, samples: Sequence[Sample]) -> list[str]:
        categories = self.stage1.predict(samples)
        out: list[Optional[str]] = [None] * len(samples)
        grouped: dict[str, list[int]] = {}
        for i, cat in enumerate(categories):
            if cat in SOLE_LEAF:
                out[i] = SOLE_LEAF[cat]
            else:
                grouped.setdefault(cat, []).append(i)
        for cat, idx in grouped.items():
            leaves = self.stage2[cat].predict([samples[i] for i in idx])
            for i, leaf in zip(idx, leaves):
                out[i] = leaf
        return out  # type: ignore[return-value]


def two_stage_predict(pipeline: Pipeline, samples: Sequence[Sample]) -> list[str]:
    return pipeline.predict(samples)


def fit_two_stage(
    samples: Sequence[Sample],
    stage1_factory: Callable[[Sequence[Sample], Sequence[str], LabelCodec], object],
    stage2_factory: Callable[[Sequence[Sample], Sequence[str], LabelCodec], object],
) -> Pipeline:
    """Train a pipeline; stage 2 models are routed on gold categories at
    training time and on predicted categories at inference."""
    stage1 = stage1_factory(samples, [s.label(TASK1) for s in samples], LabelCodec.for_task(TASK1))
    stage2 = {}
    for cat in MULTI_LEAF:
        subset = [s for s in samples if s.label(TASK1) == cat]
        codec = LabelCodec.subtask(cat)
        stage2[cat] = stage2_factory(subset, [s.label(TASK2) for s in subset], codec)
    return Pipeline(stage1=stage1, stage2=stage2)


# --- model bundles -----------------------------------------------------------


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def save_bundle(classifier, path, extra: Optional[dict] = None) -> None:
    """Write a loadable model bundle directory (metadata + weights)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta: dict = {
        "format": BUNDLE_FORMAT,
        "kind": classifier.kind,
        "labels": list(classifier.codec.labels),
    }
    if extra:
        meta.update(extra)
    if isinstance(classifier, GmClassifier):
        meta["modal"] = classifier.modal
    elif isinstance(classifier, LinearClassifier):
        vocab_items = sorted(classifier.vocab.items(), key=lambda kv: kv[1])
        (path / "vocab.txt").write_text(
            "".join(t + "\n" for t, _ in vocab_items), encoding="utf-8"
        )
        meta["vocab_hash"] = _hash_text("\n".join(t for t, _ in vocab_items))
        meta["config"] = {"epochs": classifier.config.epochs, "l2": classifier.config.l2,
                          "seed": classifier.config.seed}
        nn.save_checkpoint(path / "weights.npz", {"weights": classifier.weights})
    elif isinstance(classifier, CnnClassifier):
        meta["scheme"] = classifier.scheme
        meta["arch"] = {
            "filters": classifier.arch.filters,
            "kernel_width": classifier.arch.kernel_width,
            "hidden": classifier.arch.hidden,
            "dropout": classifier.arch.dropout,
        }
        cfg = classifier.config
        meta["config"] = {
            "learning_rate": cfg.learning_rate, "beta1": cfg.beta1, "beta2": cfg.beta2,
            "epsilon": cfg.epsilon, "batch_size": cfg.batch_size, "max_epochs": cfg.max_epochs,
            "patience": cfg.patience, "val_fraction": cfg.val_fraction, "seed": cfg.seed,
        }
        from .textprep import default_alphabet

        meta["alphabet_hash"] = _hash_text("".join(default_alphabet().chars))
        nn.save_checkpoint(path / "weights.npz", classifier.core.params)
        if classifier.embedding is not None:
            classifier.embedding.save(path / "embeddings.txt")
    else:
        raise TypeError(f"cannot bundle {type(classifier).__name__}")
    (path / "metadata.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_bundle(path):
    path = Path(path)
    meta = json.loads((path / "metadata.json").read_text(encoding="utf-8"))
    if meta.get("format") != BUNDLE_FORMAT:
        raise ValueError(f"unsupported bundle format {meta.get('format')!r}")
    codec = LabelCodec(tuple(meta["labels"]))
    kind = meta["kind"]
    if kind == "gm":
        clf = GmClassifier(codec)
        clf.modal = meta["modal"]
        return clf
    if kind == "linear":
        clf = LinearClassifier(codec, LinearConfig(**meta["config"]))
        tokens = (path / "vocab.txt").read_text(encoding="utf-8").splitlines()
        clf.vocab = {t: i for i, t in enumerate(tokens)}
        params, _ = nn.load_checkpoint(path / "weights.npz")
        clf.weights = params["weights"]
        return clf
    if kind in ("char_cnn", "word_cnn"):
        embedding = None
        if (path / "embeddings.txt").exists():
            embedding = EmbeddingTable.load(path / "embeddings.txt")
        arch = CnnArchitecture(**meta["arch"])
        clf = CnnClassifier(meta["scheme"], codec, nn.TrainConfig(**meta["config"]), arch, embedding)
        params, _ = nn.load_checkpoint(path / "weights.npz")
        core = _CnnCore.__new__(_CnnCore)
        core.arch = arch
        core.params = params
        clf.core = core
        return clf
    raise ValueError(f"unknown model kind {kind!r}")
