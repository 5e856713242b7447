"""Metrics, cross-validation, per-feature scoring, and significance tests.

Micro-averaged F1 pools true/false positives over all classes and equals
accuracy for single-label multiclass prediction. Macro-averaged F1 is the
unweighted mean of per-class F1 over *all* codec classes, so classes
absent from a fold still contribute zeros. 0/0 ratios are defined as 0.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .features import FeatureExtractor, target_context
from .encode import normalized
from .models import LabelCodec, Sample
from .taxonomy import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # (predicted, true)

    @classmethod
    def from_pairs(cls, pred: Sequence[str], gold: Sequence[str], codec: LabelCodec) -> "ConfusionMatrix":
        n = len(codec)
        counts = np.zeros((n, n), dtype=np.int64)
        for p, g in zip(pred, gold):
            counts[codec.index(p), codec.index(g)] += 1
        return cls(labels=codec.labels, counts=counts)

    def total(self) -> int:
        return int(self.counts.sum())

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["predicted\\true", *self.labels])
            for i, label in enumerate(self.labels):
                writer.writerow([label, *self.counts[i].tolist()])


@dataclass(frozen=True)
class EvalReport:
    micro_f1: float
    macro_f1: float
    per_class: dict[str, tuple[float, float, float]]  # label -> (P, R, F1)
    confusion: ConfusionMatrix

    def as_record(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_class": {
                label: {"precision": p, "recall": r, "f1": f}
                for label, (p, r, f) in self.per_class.items()
            },
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_report(pred: Sequence[str], gold: Sequence[str], codec: LabelCodec) -> EvalReport:
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if len(pred) == 0:
        raise ValueError("empty input")
    confusion = ConfusionMatrix.from_pairs(pred, gold, codec)
    counts = confusion.counts
    per_class: dict[str, tuple[float, float, float]] = {}
    f1_sum = 0.0
    for i, label in enumerate(codec.labels):
        tp = counts[i, i]
        fp = counts[i, :].sum() - tp
        fn = counts[:, i].sum() - tp
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_class[label] = (precision, recall, f1)
        f1_sum += f1
    tp_total = np.trace(counts)
    micro_p = _safe_div(tp_total, counts.sum())
    micro_r = _safe_div(tp_total, counts.sum())
    micro = _safe_div(2 * micro_p * micro_r, micro_p + micro_r)
    return EvalReport(
        micro_f1=micro,
        macro_f1=f1_sum / len(codec),
        per_class=per_class,
        confusion=confusion,
    )


# --- cross-validation -----------------------------------------------------


def kfold_assignments(labels: Sequence[str], k: int, seed: int) -> np.ndarray:
    """Stratified fold ids: a seeded shuffle within each class followed by
    round-robin assignment. Classes with fewer than k members are placed
    best-effort with a warning."""
    if k < 2:
        raise ValueError("k must be >= 2")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            logger.warning("class %r has %d < %d instances; folds will be uneven", cls, len(idx), k)
        idx = idx[rng.permutation(len(idx))]
        for pos, i in enumerate(idx):
            folds[i] = (offset + pos) % k
        offset += len(idx)
    return folds


@dataclass(frozen=True)
class CvResult:
    aggregate: EvalReport
    folds: tuple[EvalReport, ...]
    predictions: tuple[str, ...]  # aligned with the input sample order
    gold: tuple[str, ...]


def kfold_cv(
    samples: Sequence[Sample],
    task: str,
    model_factory: Callable[[Sequence[Sample], Sequence[str], LabelCodec], object],
    k: int = 10,
    seed: int = 0,
    jobs: int = 1,
) -> CvResult:
    """Stratified k-fold cross-validation over numeral samples.

    The factory builds and fits a classifier from training samples only,
    so fold-scoped state (e.g. the bag-of-words vocabulary) never sees the
    evaluation fold. Pooled predictions are scored once for the aggregate
    report; per-fold reports are returned alongside. `jobs` caps the number
    of folds evaluated concurrently; results are identical either way.
    """
    codec = LabelCodec.for_task(task)
    gold = [s.label(task) for s in samples]
    folds = kfold_assignments(gold, k, seed)

    def run_fold(fold: int):
        train_idx = np.flatnonzero(folds != fold)
        test_idx = np.flatnonzero(folds == fold)
        if len(test_idx) == 0:
            return None
        clf = model_factory(
            [samples[i] for i in train_idx], [gold[i] for i in train_idx], codec
        )
        fold_pred = clf.predict([samples[i] for i in test_idx])
        return test_idx, fold_pred

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_fold, range(k)))
    else:
        outcomes = [run_fold(fold) for fold in range(k)]

    predictions: list[Optional[str]] = [None] * len(samples)
    fold_reports = []
    for outcome in outcomes:
        if outcome is None:
            continue
        test_idx, fold_pred = outcome
        for i, p in zip(test_idx, fold_pred):
            predictions[i] = p
        fold_reports.append(f1_report(fold_pred, [gold[i] for i in test_idx], codec))
    aggregate = f1_report(predictions, gold, codec)
    return CvResult(
        aggregate=aggregate,
        folds=tuple(fold_reports),
        predictions=tuple(predictions),
        gold=tuple(gold),
    )


# --- single-feature rule classifiers ---------------------------------------

# feature name -> (how it fires, the gold label it predicts, label level)
_FEATURE_RULES: dict[str, tuple[Callable, str, str]] = {
    "percentage": (lambda fv: fv.percentage, "percentage", "category"),
    "relative": (lambda fv: fv.relative, "relative", "subcategory"),
    "absolute": (lambda fv: fv.percentage and not fv.relative, "absolute", "subcategory"),
    "option": (lambda fv: fv.exercise or fv.maturity, "option", "category"),
    "exercise_price": (lambda fv: fv.exercise, "exercise_price", "subcategory"),
    "maturity_date": (lambda fv: fv.maturity, "maturity_date", "subcategory"),
    "indicator": (lambda fv: fv.indicator, "indicator", "category"),
    "temporal": (lambda fv: fv.date or fv.time, "temporal", "category"),
    "date": (lambda fv: fv.date, "date", "subcategory"),
    "time": (lambda fv: fv.time, "time", "subcategory"),
    "quantity": (lambda fv: fv.quantity, "quantity", "category"),
}

FEATURE_NAMES = tuple(_FEATURE_RULES)


def feature_f1(samples: Sequence[Sample], feature: str) -> float:
    """F1 of the positive class for a single-feature rule classifier:
    the feature fires -> predict its (sub)category, otherwise "other"."""
    if feature not in _FEATURE_RULES:
        raise ValueError(f"unknown feature {feature!r}; one of {FEATURE_NAMES}")
    fires, positive, level = _FEATURE_RULES[feature]
    extractor = FeatureExtractor()
    tp = fp = fn = 0
    for s in samples:
        fv = extractor.extract(target_context(normalized(s.text), s.offset, s.length))
        predicted = fires(fv)
        actual = (s.category if level == "category" else s.subcategory) == positive
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    return _safe_div(2 * precision * recall, precision + recall)


# --- significance ------------------------------------------------------------


def _micro(pred: np.ndarray, gold: np.ndarray) -> float:
    return float((pred == gold).mean())


def significance_test(
    preds_a: Sequence[str],
    preds_b: Sequence[str],
    gold: Sequence[str],
    n_rounds: int = 1000,
    seed: int = 0,
) -> float:
    """Approximate randomization test on the micro-F1 difference of two
    paired prediction lists: each round swaps each pair with probability
    1/2; the p-value is the fraction of rounds whose absolute difference
    reaches the observed one."""
    if not (len(preds_a) == len(preds_b) == len(gold)):
        raise ValueError("length mismatch between predictions and gold")
    a = np.asarray(preds_a, dtype=object)
    b = np.asarray(preds_b, dtype=object)
    g = np.asarray(gold, dtype=object)
    observed = abs(_micro(a, g) - _micro(b, g))
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_rounds):
        swap = rng.random(len(a)) < 0.5
        a2 = np.where(swap, b, a)
        b2 = np.where(swap, a, b)
        if abs(_micro(a2, g) - _micro(b2, g)) >= observed - 1e-15:
            hits += 1
    return hits / n_rounds
