"""Label space, dataset schema, and inter-annotator agreement.

Numerals in financial tweets are labeled with a two-level taxonomy:
7 top-level categories, 17 leaf subcategories. Three of the categories
(Indicator, Quantity, Product) are their own sole leaf; the other four
split into finer classes. Label strings used in files are lowercase
snake_case and round-trip through the codec helpers here.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

TAXONOMY_VERSION = "numfin.v1"


class Category(Enum):
    Monetary = "monetary"
    Percentage = "percentage"
    Option = "option"
    Indicator = "indicator"
    Temporal = "temporal"
    Quantity = "quantity"
    Product = "product"


class Subcategory(Enum):
    money = "money"
    quote = "quote"
    change = "change"
    buy_price = "buy_price"
    sell_price = "sell_price"
    forecast = "forecast"
    stop_loss = "stop_loss"
    support_or_resistance = "support_or_resistance"
    relative = "relative"
    absolute = "absolute"
    exercise_price = "exercise_price"
    maturity_date = "maturity_date"
    indicator = "indicator"
    date = "date"
    time = "time"
    quantity = "quantity"
    product = "product"


SUBCATEGORY_PARENT: Mapping[Subcategory, Category] = {
    Subcategory.money: Category.Monetary,
    Subcategory.quote: Category.Monetary,
    Subcategory.change: Category.Monetary,
    Subcategory.buy_price: Category.Monetary,
    Subcategory.sell_price: Category.Monetary,
    Subcategory.forecast: Category.Monetary,
    Subcategory.stop_loss: Category.Monetary,
    Subcategory.support_or_resistance: Category.Monetary,
    Subcategory.relative: Category.Percentage,
    Subcategory.absolute: Category.Percentage,
    Subcategory.exercise_price: Category.Option,
    Subcategory.maturity_date: Category.Option,
    Subcategory.indicator: Category.Indicator,
    Subcategory.date: Category.Temporal,
    Subcategory.time: Category.Temporal,
    Subcategory.quantity: Category.Quantity,
    Subcategory.product: Category.Product,
}

CATEGORY_LEAVES: Mapping[Category, tuple[Subcategory, ...]] = {
    cat: tuple(s for s in Subcategory if SUBCATEGORY_PARENT[s] is cat)
    for cat in Category
}

# Categories whose sole leaf carries the same name; instances may omit the
# subcategory in files and it is filled in at load time.
SINGLE_LEAF_CATEGORIES = tuple(
    cat for cat, leaves in CATEGORY_LEAVES.items() if len(leaves) == 1
)

CATEGORY_LABELS = tuple(c.value for c in Category)
SUBCATEGORY_LABELS = tuple(s.value for s in Subcategory)


def parse_category(label: str) -> Category:
    try:
        return Category(label)
    except ValueError:
        raise SchemaError(f"unknown category label {label!r}") from None


def parse_subcategory(label: str) -> Subcategory:
    try:
        return Subcategory(label)
    except ValueError:
        raise SchemaError(f"unknown subcategory label {label!r}") from None


class SchemaError(ValueError):
    """A record violates the dataset schema."""


class DatasetError(ValueError):
    """A dataset file could not be loaded; message lists offending lines."""


@dataclass(frozen=True)
class Tweet:
    tweet_id: str
    text: str
    timestamp: Optional[str] = None  # ISO date or datetime, when available
    cashtags: tuple[str, ...] = ()


@dataclass(frozen=True)
class NumeralInstance:
    tweet_id: str
    offset: int
    length: int
    surface: str
    category: Category
    subcategory: Optional[Subcategory] = None
    annotations: Optional[tuple[str, str, str]] = None

    def __post_init__(self) -> None:
        if self.offset < 0:
            raise SchemaError(f"negative offset {self.offset}")
        if self.length <= 0:
            raise SchemaError(f"non-positive length {self.length}")
        if self.subcategory is not None:
            parent = SUBCATEGORY_PARENT[self.subcategory]
            if parent is not self.category:
                raise SchemaError(
                    f"subcategory {self.subcategory.value!r} belongs to "
                    f"{parent.value!r}, not {self.category.value!r}"
                )


@dataclass(frozen=True)
class Dataset:
    tweets: tuple[Tweet, ...]
    instances: tuple[NumeralInstance, ...]

    def __post_init__(self) -> None:
        ids = {t.tweet_id for t in self.tweets}
        for inst in self.instances:
            if inst.tweet_id not in ids:
                raise SchemaError(f"instance references unknown tweet {inst.tweet_id!r}")

    def text_of(self, tweet_id: str) -> str:
        return self._by_id()[tweet_id].text

    def tweet_of(self, tweet_id: str) -> Tweet:
        return self._by_id()[tweet_id]

    def _by_id(self) -> dict[str, Tweet]:
        cached = getattr(self, "_id_cache", None)
        if cached is None:
            cached = {t.tweet_id: t for t in self.tweets}
            object.__setattr__(self, "_id_cache", cached)
        return cached


def _parse_instance(tweet_id: str, text: str, obj: dict) -> NumeralInstance:
    offset = obj["offset"]
    length = obj["length"]
    if not isinstance(offset, int) or not isinstance(length, int):
        raise SchemaError("offset/length must be integers")
    if offset < 0 or length <= 0 or offset + length > len(text):
        raise SchemaError(f"span ({offset},{length}) out of bounds for text of length {len(text)}")
    category = parse_category(obj["category"])
    sub_label = obj.get("subcategory")
    if sub_label is None and category in SINGLE_LEAF_CATEGORIES:
        subcategory: Optional[Subcategory] = CATEGORY_LEAVES[category][0]
    elif sub_label is None:
        subcategory = None
    else:
        subcategory = parse_subcategory(sub_label)
    raw_ann = obj.get("annotations")
    annotations = None
    if raw_ann is not None:
        if not (isinstance(raw_ann, list) and len(raw_ann) == 3):
            raise SchemaError("annotations must be a list of 3 label strings")
        annotations = tuple(str(a) for a in raw_ann)
    return NumeralInstance(
        tweet_id=tweet_id,
        offset=offset,
        length=length,
        surface=text[offset : offset + length],
        category=category,
        subcategory=subcategory,
        annotations=annotations,
    )


def load_dataset(path, check_detection: bool = True) -> Dataset:
    """Load a UTF-8 line-delimited dataset file.

    Each line holds one tweet object with keys ``tweet_id``, ``text`` and
    ``instances`` (list of ``{offset, length, category, subcategory}``);
    ``timestamp``, ``cashtags`` and per-instance ``annotations`` are
    optional. All schema violations are collected and raised together with
    their line numbers.

    When ``check_detection`` is set, every annotated span is checked against
    the numeral detector and misses are logged as warnings (a recall check,
    not an error).
    """
    tweets: list[Tweet] = []
    instances: list[NumeralInstance] = []
    errors: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                tweet_id = obj["tweet_id"]
                text = obj["text"]
                if not isinstance(tweet_id, str) or not isinstance(text, str):
                    raise SchemaError("tweet_id and text must be strings")
                cashtags = tuple(obj.get("cashtags") or ())
                tweets.append(
                    Tweet(tweet_id=tweet_id, text=text, timestamp=obj.get("timestamp"), cashtags=cashtags)
                )
                for inst_obj in obj.get("instances", []):
                    instances.append(_parse_instance(tweet_id, text, inst_obj))
            except (KeyError, TypeError, json.JSONDecodeError, SchemaError) as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors:
        raise DatasetError("; ".join(errors))
    dataset = Dataset(tweets=tuple(tweets), instances=tuple(instances))
    if check_detection:
        _check_detection_recall(dataset)
    return dataset


def _check_detection_recall(dataset: Dataset) -> None:
    from . import textprep  # deferred: textprep imports nothing from here

    by_id = {t.tweet_id: t.text for t in dataset.tweets}
    detected: dict[str, set[int]] = {}
    for inst in dataset.instances:
        if inst.tweet_id not in detected:
            spans = textprep.detect_numerals(by_id[inst.tweet_id])
            detected[inst.tweet_id] = {offset for offset, _, _ in spans}
        if inst.offset not in detected[inst.tweet_id]:
            logger.warning(
                "tweet %s: annotated span at %d (%r) not found by numeral detection",
                inst.tweet_id, inst.offset, inst.surface,
            )


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to the line-delimited file format."""
    by_id: dict[str, list[NumeralInstance]] = {}
    for inst in dataset.instances:
        by_id.setdefault(inst.tweet_id, []).append(inst)
    with open(path, "w", encoding="utf-8") as fh:
        for tweet in dataset.tweets:
            obj: dict = {"tweet_id": tweet.tweet_id, "text": tweet.text}
            if tweet.timestamp is not None:
                obj["timestamp"] = tweet.timestamp
            if tweet.cashtags:
                obj["cashtags"] = list(tweet.cashtags)
            insts = []
            for inst in by_id.get(tweet.tweet_id, []):
                inst_obj: dict = {
                    "offset": inst.offset,
                    "length": inst.length,
                    "category": inst.category.value,
                    "subcategory": inst.subcategory.value if inst.subcategory else None,
                }
                if inst.annotations is not None:
                    inst_obj["annotations"] = list(inst.annotations)
                insts.append(inst_obj)
            obj["instances"] = insts
            fh.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def label_distribution(dataset: Dataset) -> dict[Subcategory, tuple[int, float]]:
    """Count instances per subcategory and the share of the total in percent.

    Raises if any instance lacks a subcategory; counts sum to the number of
    instances and percentages to 100 (up to float rounding).
    """
    counts: Counter[Subcategory] = Counter()
    for inst in dataset.instances:
        if inst.subcategory is None:
            raise ValueError(f"instance at {inst.tweet_id}:{inst.offset} has no subcategory")
        counts[inst.subcategory] += 1
    total = sum(counts.values())
    return {
        sub: (n, 100.0 * n / total)
        for sub, n in sorted(counts.items(), key=lambda kv: kv[0].value)
    }


def cohen_kappa(a: Sequence, b: Sequence) -> float:
    """Chance-corrected agreement between two equal-length label sequences.

    kappa = (p_o - p_e) / (1 - p_e) with observed agreement p_o and chance
    agreement p_e from the two marginal label distributions. Degenerate
    p_e = 1 returns 1.0 for perfect agreement and 0.0 otherwise.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise ValueError("empty input")
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    freq_a = Counter(a)
    freq_b = Counter(b)
    p_e = sum(freq_a[l] * freq_b.get(l, 0) for l in freq_a) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


@dataclass(frozen=True)
class AgreementReport:
    unanimous_pct: float
    majority_pct: float
    inconsistent_pct: float
    pairwise_kappas: tuple[float, float, float]  # (1,2), (1,3), (2,3)


def agreement_report(annotations: Sequence[Sequence]) -> AgreementReport:
    """Agreement breakdown for three annotators over the same items.

    Items are unanimous when all three labels agree, majority when exactly
    two agree, inconsistent when all differ; the three percentages sum to
    100. Pairwise kappas are computed with :func:`cohen_kappa`.
    """
    if len(annotations) != 3:
        raise ValueError("exactly three annotation sequences required")
    a, b, c = annotations
    if not (len(a) == len(b) == len(c)):
        raise ValueError("annotation sequences must have equal length")
    n = len(a)
    if n == 0:
        raise ValueError("empty input")
    unanimous = majority = inconsistent = 0
    for x, y, z in zip(a, b, c):
        distinct = len({x, y, z})
        if distinct == 1:
            unanimous += 1
        elif distinct == 2:
            majority += 1
        else:
            inconsistent += 1
    kappas = (cohen_kappa(a, b), cohen_kappa(a, c), cohen_kappa(b, c))
    return AgreementReport(
        unanimous_pct=100.0 * unanimous / n,
        majority_pct=100.0 * majority / n,
        inconsistent_pct=100.0 * inconsistent / n,
        pairwise_kappas=kappas,
    )
