"""Forecast-price extraction, crowd-vs-analyst comparison, and backtesting.

Forecast opinions are collected per ticker and calendar month; at each
month end the consensus (median) forecast is compared with the close:
above opens a long, below opens a short, equal stays flat. Open positions
are checked on daily closes only. A position exits on the first close
whose unrealized loss reaches the stop-loss fraction, when the close
crosses the forecast in the favorable direction (target hit), when a new
month-end consensus points the other way (signal flip), or at the end of
the backtest window.

A short is treated exactly as a long on the reciprocal price series:
its stop triggers at entry/(1 - s) and its return is entry/exit - 1.
This makes long and short behavior mirror images under price inversion,
at the cost of the short stop sitting slightly above the naive
(1 + s) multiple.
"""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import logging
from calendar import monthrange
from collections import defaultdict
from dataclasses import dataclass, field
from statistics import median
from typing import Optional, Sequence

from .models import Sample, TASK2
from .taxonomy import Dataset, Subcategory
from .textprep import detect_numerals

logger = logging.getLogger(__name__)

DAYS_PER_MONTH = 30.4375  # average Gregorian month, used for durations

CROWD = "crowd"
ANALYST = "analyst"


@dataclass(frozen=True)
class ForecastObservation:
    ticker: str
    month: str  # "YYYY-MM"
    price: float
    source: str = CROWD
    tweet_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.price <= 0:
            raise ValueError("forecast price must be positive")
        dt.datetime.strptime(self.month, "%Y-%m")


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    dates: tuple[dt.date, ...]
    opens: tuple[float, ...]
    highs: tuple[float, ...]
    lows: tuple[float, ...]
    closes: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.dates)
        if not (len(self.opens) == len(self.highs) == len(self.lows) == len(self.closes) == n):
            raise ValueError("price columns have unequal lengths")
        for i in range(n):
            o, h, l, c = self.opens[i], self.highs[i], self.lows[i], self.closes[i]
            if not (0 < l <= min(o, c) and max(o, c) <= h):
                raise ValueError(f"{self.ticker} {self.dates[i]}: inconsistent bar {o},{h},{l},{c}")
            if i and self.dates[i] <= self.dates[i - 1]:
                raise ValueError(f"{self.ticker}: dates not strictly increasing at {self.dates[i]}")

    def index_on_or_after(self, date: dt.date) -> Optional[int]:
        i = bisect.bisect_left(self.dates, date)
        return i if i < len(self.dates) else None

    def last_index_on_or_before(self, date: dt.date) -> Optional[int]:
        i = bisect.bisect_right(self.dates, date) - 1
        return i if i >= 0 else None


def load_prices(path) -> dict[str, PriceSeries]:
    """Read a `date,ticker,open,high,low,close` CSV into per-ticker series."""
    rows: dict[str, list[tuple[dt.date, float, float, float, float]]] = defaultdict(list)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"date", "ticker", "open", "high", "low", "close"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"price file must have columns {sorted(required)}")
        for row in reader:
            rows[row["ticker"]].append(
                (
                    dt.date.fromisoformat(row["date"]),
                    float(row["open"]),
                    float(row["high"]),
                    float(row["low"]),
                    float(row["close"]),
                )
            )
    series = {}
    for ticker, bars in rows.items():
        bars.sort(key=lambda b: b[0])
        series[ticker] = PriceSeries(
            ticker=ticker,
            dates=tuple(b[0] for b in bars),
            opens=tuple(b[1] for b in bars),
            highs=tuple(b[2] for b in bars),
            lows=tuple(b[3] for b in bars),
            closes=tuple(b[4] for b in bars),
        )
    return series


def load_analyst_forecasts(path) -> list[ForecastObservation]:
    """Read a `ticker,month,forecast` CSV (month as YYYY-MM)."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"ticker", "month", "forecast"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"analyst file must have columns {sorted(required)}")
        for row in reader:
            out.append(
                ForecastObservation(
                    ticker=row["ticker"],
                    month=row["month"],
                    price=float(row["forecast"]),
                    source=ANALYST,
                )
            )
    return out


# --- forecast extraction ----------------------------------------------------


def numeral_value(surface: str) -> Optional[float]:
    """Numeric value of a detected numeral surface; None when the surface
    is a date-like or fractional pattern with no single price reading."""
    s = surface.replace(",", "").lstrip("$")
    if "/" in s or s.count("-") > (1 if s.startswith("-") else 0):
        return None
    try:
        value = float(s)
    except ValueError:
        return None
    return value


def _month_of(timestamp: str) -> str:
    return timestamp[:7]


def extract_forecasts(
    dataset: Dataset, classifier=None, source: str = CROWD
) -> list[ForecastObservation]:
    """Collect forecast-price observations from tweets.

    With a classifier (17-way task), numerals are detected and classified,
    and those predicted "forecast" are kept; without one, gold subcategory
    annotations are used. The ticker comes from the tweet's first cashtag
    and the month from its timestamp; tweets lacking either are skipped
    with a warning.
    """
    observations: list[ForecastObservation] = []
    if classifier is None:
        candidates = [
            (inst.tweet_id, inst.surface)
            for inst in dataset.instances
            if inst.subcategory is Subcategory.forecast
        ]
    else:
        samples = []
        for tweet in dataset.tweets:
            for offset, length, surface in detect_numerals(tweet.text):
                samples.append(Sample(tweet.tweet_id, tweet.text, offset, length))
        predicted = classifier.predict(samples) if samples else []
        candidates = [
            (s.tweet_id, s.text[s.offset : s.offset + s.length])
            for s, label in zip(samples, predicted)
            if label == Subcategory.forecast.value
        ]

    by_id = {t.tweet_id: t for t in dataset.tweets}
    for tweet_id, surface in candidates:
        tweet = by_id[tweet_id]
        ticker = tweet.cashtags[0] if tweet.cashtags else None
        if ticker is None or tweet.timestamp is None:
            logger.warning("tweet %s: missing cashtag or timestamp, skipped", tweet_id)
            continue
        value = numeral_value(surface)
        if value is None or value <= 0:
            logger.warning("tweet %s: numeral %r has no price reading, skipped", tweet_id, surface)
            continue
        observations.append(
            ForecastObservation(
                ticker=ticker.lstrip("$").upper(),
                month=_month_of(tweet.timestamp),
                price=value,
                source=source,
                tweet_id=tweet_id,
            )
        )
    return observations


def monthly_consensus(prices: Sequence[float]) -> float:
    """Median of one ticker-month's forecast prices (mean of the middle
    two for even counts)."""
    if not prices:
        raise ValueError("no observations")
    return float(median(prices))


def consensus_by_ticker_month(
    observations: Sequence[ForecastObservation],
) -> dict[tuple[str, str], float]:
    grouped: dict[tuple[str, str], list[float]] = defaultdict(list)
    for obs in observations:
        grouped[(obs.ticker, obs.month)].append(obs.price)
    return {key: monthly_consensus(vals) for key, vals in grouped.items()}


# --- backtest ----------------------------------------------------------------


@dataclass
class BacktestConfig:
    start: dt.date
    end: dt.date
    stop_loss: float = 0.07

    def __post_init__(self) -> None:
        if isinstance(self.start, str):
            self.start = dt.date.fromisoformat(self.start)
        if isinstance(self.end, str):
            self.end = dt.date.fromisoformat(self.end)
        if self.start >= self.end:
            raise ValueError("start must precede end")
        if not 0.0 < self.stop_loss < 1.0:
            raise ValueError("stop_loss must be a fraction in (0, 1)")


LONG = "long"
SHORT = "short"

STOP_LOSS = "stop_loss"
TARGET_HIT = "target_hit"
SIGNAL_FLIP = "signal_flip"
HORIZON_END = "horizon_end"


@dataclass
class Position:
    ticker: str
    direction: str
    entry_date: dt.date
    entry_price: float
    forecast_price: float
    exit_date: Optional[dt.date] = None
    exit_price: Optional[float] = None
    exit_reason: Optional[str] = None

    def __post_init__(self) -> None:
        if self.direction == LONG and not self.forecast_price > self.entry_price:
            raise ValueError("long positions require forecast above entry")
        if self.direction == SHORT and not self.forecast_price < self.entry_price:
            raise ValueError("short positions require forecast below entry")

    @property
    def return_pct(self) -> Optional[float]:
        if self.exit_price is None:
            return None
        if self.direction == LONG:
            return 100.0 * (self.exit_price / self.entry_price - 1.0)
        return 100.0 * (self.entry_price / self.exit_price - 1.0)


@dataclass(frozen=True)
class BacktestMetrics:
    average_difference: float  # % gap between forecast and decision close
    achieving_rate: float  # % of signals whose forecast the price later reached
    achieving_duration: float  # mean months to first achievement (achieved only)
    average_return: float  # % mean trade return

    def as_record(self) -> dict:
        return {
            "average_difference": self.average_difference,
            "achieving_rate": self.achieving_rate,
            "achieving_duration": self.achieving_duration,
            "average_return": self.average_return,
        }


def month_end(month: str) -> dt.date:
    year, mon = int(month[:4]), int(month[5:7])
    return dt.date(year, mon, monthrange(year, mon)[1])


def _months_in_window(config: BacktestConfig) -> list[str]:
    months = []
    cursor = dt.date(config.start.year, config.start.month, 1)
    while cursor <= config.end:
        months.append(f"{cursor.year:04d}-{cursor.month:02d}")
        cursor = dt.date(cursor.year + cursor.month // 12, cursor.month % 12 + 1, 1)
    return months


def _decision_index(series: PriceSeries, month: str, config: BacktestConfig) -> Optional[int]:
    """Bar index of the month-end check, rolled to the next trading day
    when the calendar month end has no bar."""
    target = month_end(month)
    i = series.last_index_on_or_before(target)
    if i is not None and series.dates[i].year == target.year and series.dates[i].month == target.month:
        return i
    i = series.index_on_or_after(target)
    if i is None or series.dates[i] > config.end:
        return None
    logger.warning("%s: no bar at %s, rolled to %s", series.ticker, target, series.dates[i])
    return i


def _stop_hit(direction: str, entry: float, close: float, stop: float) -> bool:
    if direction == LONG:
        return close <= entry * (1.0 - stop)
    return close >= entry / (1.0 - stop)


def _target_hit(direction: str, forecast: float, close: float) -> bool:
    if direction == LONG:
        return close >= forecast
    return close <= forecast


def run_backtest(
    forecasts: Sequence[ForecastObservation],
    prices: dict[str, PriceSeries],
    config: BacktestConfig,
) -> tuple[list[Position], BacktestMetrics]:
    """Trade monthly consensus forecasts under the stop-loss discipline.

    Returns the trade log (one entry per opened position, chronological
    per ticker) and the four summary statistics over consensus signals.
    """
    consensus = consensus_by_ticker_month(forecasts)
    months = _months_in_window(config)
    log: list[Position] = []
    differences: list[float] = []
    achieved_flags: list[bool] = []
    durations: list[float] = []
    returns: list[float] = []

    for ticker in sorted({t for t, _ in consensus}):
        series = prices.get(ticker)
        if series is None:
            logger.warning("no prices for %s, skipping its forecasts", ticker)
            continue
        open_pos: Optional[Position] = None
        last_idx = series.last_index_on_or_before(config.end)
        if last_idx is None:
            continue
        decision_at: dict[int, str] = {}
        for month in months:
            if (ticker, month) in consensus:
                idx = _decision_index(series, month, config)
                if idx is not None:
                    decision_at[idx] = month

        start_idx = series.index_on_or_after(config.start)
        if start_idx is None:
            continue
        for i in range(start_idx, last_idx + 1):
            close = series.closes[i]
            date = series.dates[i]
            # exits are evaluated before any new decision on the same close
            if open_pos is not None and date > open_pos.entry_date:
                if _stop_hit(open_pos.direction, open_pos.entry_price, close, config.stop_loss):
                    open_pos.exit_date, open_pos.exit_price, open_pos.exit_reason = date, close, STOP_LOSS
                    open_pos = None
                elif _target_hit(open_pos.direction, open_pos.forecast_price, close):
                    open_pos.exit_date, open_pos.exit_price, open_pos.exit_reason = date, close, TARGET_HIT
                    open_pos = None
            if i in decision_at:
                forecast = consensus[(ticker, decision_at[i])]
                direction = LONG if forecast > close else SHORT if forecast < close else None
                outcome = _observe(series, i, forecast, config)
                differences.append(outcome.difference)
                achieved_flags.append(outcome.achieved)
                if outcome.achieved:
                    durations.append(outcome.duration_months)
                if open_pos is not None and direction is not None and direction != open_pos.direction:
                    open_pos.exit_date, open_pos.exit_price, open_pos.exit_reason = date, close, SIGNAL_FLIP
                    open_pos = None
                if open_pos is None and direction is not None:
                    open_pos = Position(
                        ticker=ticker,
                        direction=direction,
                        entry_date=date,
                        entry_price=close,
                        forecast_price=forecast,
                    )
                    log.append(open_pos)
                if direction is None:
                    returns.append(0.0)  # flat signal: no position
        if open_pos is not None:
            open_pos.exit_date = series.dates[last_idx]
            open_pos.exit_price = series.closes[last_idx]
            open_pos.exit_reason = HORIZON_END
            open_pos = None

    returns.extend(p.return_pct for p in log)
    metrics = BacktestMetrics(
        average_difference=_mean(differences),
        achieving_rate=100.0 * _mean([1.0 if a else 0.0 for a in achieved_flags]),
        achieving_duration=_mean(durations),
        average_return=_mean(returns),
    )
    return log, metrics


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0


def write_trade_log(log: Sequence[Position], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["ticker", "direction", "entry_date", "entry_price", "exit_date", "exit_price",
             "exit_reason", "return_pct"]
        )
        for p in log:
            writer.writerow(
                [p.ticker, p.direction, p.entry_date.isoformat(), repr(p.entry_price),
                 p.exit_date.isoformat() if p.exit_date else "",
                 repr(p.exit_price) if p.exit_price is not None else "",
                 p.exit_reason or "", repr(p.return_pct) if p.return_pct is not None else ""]
            )


# --- per-observation evaluation and source comparison -------------------------


@dataclass(frozen=True)
class ObservationOutcome:
    difference: float  # |forecast - decision close| / close, in percent
    achieved: bool
    duration_months: float  # 0 when not achieved
    trade_return: float  # % return of the single-observation trade


def _observe(
    series: PriceSeries, decision_idx: int, forecast: float, config: BacktestConfig
) -> ObservationOutcome:
    close = series.closes[decision_idx]
    difference = 100.0 * abs(forecast - close) / close
    direction = LONG if forecast > close else SHORT if forecast < close else None

    achieved = False
    duration = 0.0
    last_idx = series.last_index_on_or_before(config.end)
    for i in range(decision_idx + 1, (last_idx or -1) + 1):
        reached = series.closes[i] >= forecast if forecast >= close else series.closes[i] <= forecast
        if reached:
            achieved = True
            duration = (series.dates[i] - series.dates[decision_idx]).days / DAYS_PER_MONTH
            break

    trade_return = 0.0
    if direction is not None:
        exit_price = series.closes[last_idx] if last_idx is not None else close
        for i in range(decision_idx + 1, (last_idx or -1) + 1):
            c = series.closes[i]
            if _stop_hit(direction, close, c, config.stop_loss) or _target_hit(direction, forecast, c):
                exit_price = c
                break
        if direction == LONG:
            trade_return = 100.0 * (exit_price / close - 1.0)
        else:
            trade_return = 100.0 * (close / exit_price - 1.0)
    return ObservationOutcome(
        difference=difference, achieved=achieved, duration_months=duration, trade_return=trade_return
    )


def evaluate_observations(
    observations: Sequence[ForecastObservation],
    prices: dict[str, PriceSeries],
    config: BacktestConfig,
) -> BacktestMetrics:
    """Table-style per-observation statistics for one source."""
    differences: list[float] = []
    achieved: list[bool] = []
    durations: list[float] = []
    returns: list[float] = []
    for obs in observations:
        series = prices.get(obs.ticker)
        if series is None:
            logger.warning("no prices for %s, observation skipped", obs.ticker)
            continue
        idx = _decision_index(series, obs.month, config)
        if idx is None:
            logger.warning("%s %s: no decision bar in window, skipped", obs.ticker, obs.month)
            continue
        outcome = _observe(series, idx, obs.price, config)
        differences.append(outcome.difference)
        achieved.append(outcome.achieved)
        if outcome.achieved:
            durations.append(outcome.duration_months)
        returns.append(outcome.trade_return)
    return BacktestMetrics(
        average_difference=_mean(differences),
        achieving_rate=100.0 * _mean([1.0 if a else 0.0 for a in achieved]),
        achieving_duration=_mean(durations),
        average_return=_mean(returns),
    )


@dataclass(frozen=True)
class SourceComparison:
    crowd: BacktestMetrics
    analyst: BacktestMetrics
    disagreement_rate: float  # % of shared ticker-months with opposite directions

    def as_record(self) -> dict:
        return {
            "crowd": self.crowd.as_record(),
            "analyst": self.analyst.as_record(),
            "disagreement_rate": self.disagreement_rate,
        }


def compare_sources(
    crowd_obs: Sequence[ForecastObservation],
    analyst_obs: Sequence[ForecastObservation],
    prices: dict[str, PriceSeries],
    config: BacktestConfig,
) -> SourceComparison:
    crowd_metrics = evaluate_observations(crowd_obs, prices, config)
    analyst_metrics = evaluate_observations(analyst_obs, prices, config)

    crowd_cons = consensus_by_ticker_month(crowd_obs)
    analyst_cons = consensus_by_ticker_month(analyst_obs)
    shared = sorted(set(crowd_cons) & set(analyst_cons))
    opposite = 0
    compared = 0
    for key in shared:
        ticker, month = key
        series = prices.get(ticker)
        if series is None:
            continue
        idx = _decision_index(series, month, config)
        if idx is None:
            continue
        close = series.closes[idx]
        sign_crowd = (crowd_cons[key] > close) - (crowd_cons[key] < close)
        sign_analyst = (analyst_cons[key] > close) - (analyst_cons[key] < close)
        compared += 1
        if sign_crowd * sign_analyst < 0:
            opposite += 1
    rate = 100.0 * opposite / compared if compared else 0.0
    return SourceComparison(crowd=crowd_metrics, analyst=analyst_metrics, disagreement_rate=rate)
