"""Command-line entry point.

Subcommands: preprocess, train, predict, cv, embed, kappa, backtest,
compare, features. Every command reads defaults from an INI config file
(``--config``), lets flags override config keys, validates its inputs
before writing anything, and produces byte-identical outputs when rerun
with the same config and seed.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation, models, nn, trading
from .embed import EmbeddingTable, train_skipgram
from .encode import normalized
from .features import FeatureExtractor, FeatureVector, target_context
from .models import LabelCodec, LinearConfig, Sample, samples_from_dataset
from .taxonomy import AgreementReport, Dataset, DatasetError, agreement_report, cohen_kappa, load_dataset
from .textprep import detect_numerals, normalize, tokenize

logger = logging.getLogger("numfin")

MODEL_KINDS = ("gm", "linear", "char_cnn", "word_cnn")


class CliError(Exception):
    """User-facing command failure; message printed to stderr, exit 1."""


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


class Settings:
    """Flag-over-config resolution: CLI values win, then the config file."""

    def __init__(self, config_path):
        self.parser = configparser.ConfigParser()
        if config_path:
            if not Path(config_path).exists():
                raise CliError(f"config file not found: {config_path}")
            self.parser.read(config_path, encoding="utf-8")

    def get(self, flag_value, section: str, key: str, cast=str, default=None):
        if flag_value is not None:
            return flag_value
        if self.parser.has_option(section, key):
            raw = self.parser.get(section, key)
            return cast(raw) if cast is not bool else self.parser.getboolean(section, key)
        return default

    def require(self, flag_value, section: str, key: str, cast=str):
        value = self.get(flag_value, section, key, cast)
        if value is None:
            raise CliError(f"missing required setting {section}.{key} (flag or config)")
        return value


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {p}")
    return p


def _load_dataset(path) -> Dataset:
    try:
        return load_dataset(_require_file(path, "dataset"))
    except DatasetError as exc:
        raise CliError(f"malformed dataset: {exc}") from exc


def _resolve_seed(settings: Settings, args) -> int:
    return settings.require(args.seed, "run", "seed", int)


# --- model construction -------------------------------------------------


def _train_config(settings: Settings, args, seed: int) -> nn.TrainConfig:
    return nn.TrainConfig(
        learning_rate=settings.get(getattr(args, "learning_rate", None), "model", "learning_rate", float, 1e-3),
        batch_size=settings.get(getattr(args, "batch_size", None), "model", "batch_size", int, 32),
        max_epochs=settings.get(getattr(args, "max_epochs", None), "model", "max_epochs", int, 200),
        patience=settings.get(getattr(args, "patience", None), "model", "patience", int, 20),
        seed=seed,
    )


def _model_factory(kind: str, settings: Settings, args, seed: int, embedding):
    """Return fit(samples, labels, codec) -> classifier for a model kind."""
    if kind == "gm":
        return lambda samples, labels, codec: models.gm_fit(labels, codec)
    if kind == "linear":
        config = LinearConfig(
            epochs=settings.get(getattr(args, "linear_epochs", None), "model", "linear_epochs", int, 30),
            l2=settings.get(None, "model", "l2", float, 1e-4),
            seed=seed,
        )
        return lambda samples, labels, codec: models.linear_fit(samples, labels, codec, config)
    if kind in ("char_cnn", "word_cnn"):
        scheme = kind.split("_")[0]
        if scheme == "word" and embedding is None:
            raise CliError("word_cnn requires --embeddings")
        config = _train_config(settings, args, seed)
        return lambda samples, labels, codec: models.cnn_fit(
            samples, labels, scheme, codec, config, embedding
        )
    raise CliError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _maybe_embedding(settings: Settings, args):
    path = settings.get(getattr(args, "embeddings", None), "paths", "embeddings")
    if path is None:
        return None
    return EmbeddingTable.load(_require_file(path, "embedding file"))


# --- subcommands ----------------------------------------------------------


def cmd_preprocess(args, settings: Settings) -> int:
    dataset = _load_dataset(args.input)
    lines = []
    for tweet in dataset.tweets:
        nt = normalize(tweet.text)
        count = sum(1 for i in dataset.instances if i.tweet_id == tweet.tweet_id)
        lines.append(json.dumps({
            "tweet_id": tweet.tweet_id,
            "original": tweet.text,
            "normalized": nt.normalized,
            "tokens": list(nt.tokens),
            "detected": [[o, l, s] for o, l, s in detect_numerals(tweet.text)],
            "instances": count,
        }, ensure_ascii=False, sort_keys=True))
    Path(args.output).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(f"preprocessed {len(dataset.tweets)} tweets, {len(dataset.instances)} instances")
    return 0


def cmd_train(args, settings: Settings) -> int:
    seed = _resolve_seed(settings, args)
    task = settings.require(args.task, "model", "task")
    kind = settings.require(args.model, "model", "kind")
    dataset = _load_dataset(settings.require(args.dataset, "paths", "dataset"))
    embedding = _maybe_embedding(settings, args) if kind == "word_cnn" else None
    factory = _model_factory(kind, settings, args, seed, embedding)
    samples = samples_from_dataset(dataset)
    labels = [s.label(task) for s in samples]
    clf = factory(samples, labels, LabelCodec.for_task(task))
    models.save_bundle(clf, args.out, extra={"task": task, "seed": seed})
    print(f"trained {kind} on {len(samples)} samples -> {args.out}")
    return 0


def cmd_predict(args, settings: Settings) -> int:
    bundle = models.load_bundle(_require_file(args.bundle, "model bundle"))
    dataset = _load_dataset(args.input)
    samples = samples_from_dataset(dataset)
    if not samples:  # unlabeled input: classify every detected numeral
        samples = [
            Sample(t.tweet_id, t.text, o, l)
            for t in dataset.tweets
            for o, l, _ in detect_numerals(t.text)
        ]
    predictions = bundle.predict(samples)
    with open(args.out, "w", encoding="utf-8") as fh:
        for s, label in zip(samples, predictions):
            fh.write(json.dumps({
                "tweet_id": s.tweet_id,
                "offset": s.offset,
                "length": s.length,
                "surface": s.text[s.offset : s.offset + s.length],
                "label": label,
            }, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"predicted {len(samples)} numerals -> {args.out}")
    return 0


def cmd_cv(args, settings: Settings) -> int:
    seed = _resolve_seed(settings, args)
    task = settings.require(args.task, "model", "task")
    kind = settings.require(args.model, "model", "kind")
    k = settings.get(args.k, "model", "k", int, 10)
    dataset = _load_dataset(settings.require(args.dataset, "paths", "dataset"))
    embedding = _maybe_embedding(settings, args) if kind == "word_cnn" else None
    factory = _model_factory(kind, settings, args, seed, embedding)
    samples = samples_from_dataset(dataset)
    result = evaluation.kfold_cv(samples, task, factory, k=k, seed=seed, jobs=args.jobs or 1)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", {
        "task": task,
        "model": kind,
        "k": k,
        "seed": seed,
        "aggregate": result.aggregate.as_record(),
        "folds": [r.as_record() for r in result.folds],
    })
    result.aggregate.confusion.write_csv(out_dir / "confusion.csv")
    print(
        f"{kind} {task} {k}-fold: micro {100 * result.aggregate.micro_f1:.2f} "
        f"macro {100 * result.aggregate.macro_f1:.2f} -> {out_dir}"
    )
    return 0


def cmd_embed(args, settings: Settings) -> int:
    seed = _resolve_seed(settings, args)
    corpus_path = _require_file(settings.require(args.corpus, "paths", "corpus"), "corpus")
    corpus = []
    if corpus_path.suffix == ".jsonl":
        dataset = _load_dataset(corpus_path)
        corpus = [normalized(t.text).tokens for t in dataset.tweets]
    else:
        with open(corpus_path, encoding="utf-8") as fh:
            corpus = [normalized(line.strip()).tokens for line in fh if line.strip()]
    table = train_skipgram(
        corpus,
        dim=settings.get(args.dim, "model", "dim", int, 250),
        window=settings.get(args.window, "model", "window", int, 5),
        negatives=settings.get(args.negatives, "model", "negatives", int, 5),
        epochs=settings.get(args.epochs, "model", "epochs", int, 5),
        seed=seed,
    )
    table.save(args.out)
    print(f"trained {len(table)} x {table.dim} embeddings -> {args.out}")
    return 0


def cmd_kappa(args, settings: Settings) -> int:
    path = _require_file(args.annotations, "annotations file")
    if path.suffix == ".jsonl":
        dataset = _load_dataset(path)
        triples = [i.annotations for i in dataset.instances if i.annotations is not None]
        if not triples:
            raise CliError("dataset has no instances with an annotations field")
        columns = list(zip(*triples))
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if not rows or len(rows[0]) not in (2, 3):
            raise CliError("annotations CSV must have 2 or 3 columns")
        columns = list(zip(*rows))
    if len(columns) == 2:
        payload = {"kappa": cohen_kappa(columns[0], columns[1])}
    else:
        report = agreement_report(columns)
        payload = {
            "unanimous_pct": report.unanimous_pct,
            "majority_pct": report.majority_pct,
            "inconsistent_pct": report.inconsistent_pct,
            "pairwise_kappas": list(report.pairwise_kappas),
        }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _crowd_forecasts(args, settings: Settings):
    forecasts_path = settings.get(getattr(args, "forecasts", None), "paths", "forecasts")
    if forecasts_path:
        obs = trading.load_analyst_forecasts(_require_file(forecasts_path, "forecast file"))
        return [trading.ForecastObservation(o.ticker, o.month, o.price, trading.CROWD) for o in obs]
    dataset = _load_dataset(settings.require(args.dataset, "paths", "dataset"))
    classifier = None
    if getattr(args, "bundle", None):
        classifier = models.load_bundle(_require_file(args.bundle, "model bundle"))
    return trading.extract_forecasts(dataset, classifier)


def _backtest_config(args, settings: Settings) -> trading.BacktestConfig:
    return trading.BacktestConfig(
        start=settings.require(args.start, "backtest", "start"),
        end=settings.require(args.end, "backtest", "end"),
        stop_loss=settings.get(args.stop_loss, "backtest", "stop_loss", float, 0.07),
    )


def cmd_backtest(args, settings: Settings) -> int:
    config = _backtest_config(args, settings)
    prices = trading.load_prices(
        _require_file(settings.require(args.prices, "paths", "prices"), "price file")
    )
    forecasts = _crowd_forecasts(args, settings)
    if not forecasts:
        raise CliError("no forecast observations available")
    log, metrics = trading.run_backtest(forecasts, prices, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trading.write_trade_log(log, out_dir / "trades.csv")
    _write_json(out_dir / "metrics.json", metrics.as_record())
    print(f"{len(log)} trades, average return {metrics.average_return:.2f}% -> {out_dir}")
    return 0


def cmd_compare(args, settings: Settings) -> int:
    config = _backtest_config(args, settings)
    prices = trading.load_prices(
        _require_file(settings.require(args.prices, "paths", "prices"), "price file")
    )
    analyst = trading.load_analyst_forecasts(
        _require_file(settings.require(args.analyst, "paths", "analyst"), "analyst file")
    )
    crowd = _crowd_forecasts(args, settings)
    comparison = trading.compare_sources(crowd, analyst, prices, config)
    text = json.dumps(comparison.as_record(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_features(args, settings: Settings) -> int:
    dataset = _load_dataset(settings.require(args.dataset, "paths", "dataset"))
    extractor = FeatureExtractor()
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["tweet_id", "offset", "length", "surface", *FeatureVector.NAMES, "category", "subcategory"]
        )
        for inst in dataset.instances:
            ctx = target_context(normalized(dataset.text_of(inst.tweet_id)), inst.offset, inst.length)
            fv = extractor.extract(ctx)
            writer.writerow([
                inst.tweet_id, inst.offset, inst.length, inst.surface,
                *(int(v) for v in fv.as_tuple()),
                inst.category.value,
                inst.subcategory.value if inst.subcategory else "",
            ])
    print(f"wrote features for {len(dataset.instances)} numerals -> {args.out}")
    return 0


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="numfin",
        description="Numeral understanding in financial tweets: preprocessing, "
        "classification, evaluation, and crowd-forecast backtesting.",
    )
    parser.add_argument("--config", help="INI config file; flags override its keys")
    parser.add_argument("--seed", type=int, help="random seed (required for train/cv/embed)")
    parser.add_argument("--jobs", type=int, default=1, help="max parallel workers")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize tweets and detect numeral spans")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_preprocess)

    def add_model_args(p):
        p.add_argument("--dataset")
        p.add_argument("--task", choices=("task1", "task2"))
        p.add_argument("--model", choices=MODEL_KINDS)
        p.add_argument("--embeddings")
        p.add_argument("--max-epochs", dest="max_epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--linear-epochs", dest="linear_epochs", type=int)

    p = sub.add_parser("train", help="fit a classifier and write a model bundle")
    add_model_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label numerals with a trained bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    add_model_args(p)
    p.add_argument("--k", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("embed", help="train skip-gram embeddings over a corpus")
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("kappa", help="inter-annotator agreement report")
    p.add_argument("--annotations", required=True,
                   help="CSV with 2-3 label columns, or a dataset .jsonl with annotations")
    p.add_argument("--out")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("backtest", help="trade monthly consensus forecasts")
    p.add_argument("--prices")
    p.add_argument("--forecasts", help="CSV ticker,month,forecast used as crowd signals")
    p.add_argument("--dataset", help="extract forecasts from this dataset instead")
    p.add_argument("--bundle", help="classify numerals with this bundle (default: gold labels)")
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--stop-loss", dest="stop_loss", type=float)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("compare", help="crowd vs analyst forecast statistics")
    p.add_argument("--prices")
    p.add_argument("--analyst")
    p.add_argument("--forecasts")
    p.add_argument("--dataset")
    p.add_argument("--bundle")
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--stop-loss", dest="stop_loss", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("features", help="dump the 8 context features per numeral")
    p.add_argument("--dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        settings = Settings(args.config)
        return args.func(args, settings)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
