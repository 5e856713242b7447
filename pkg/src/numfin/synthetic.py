"""Seeded generator of labeled financial-style tweets.

Builds datasets from templates that exercise the same keyword and pattern
grammar the context features read: percent signs with and without
direction words, month-plus-call option phrasings, indicator suffixes,
slash dates and quarter markers, time units, and share counts. A share of
the tweets are multi-numeral composites (quote, resistance, objective and
stop level in one message) whose targets share an identical bag of words,
so only target-position context can separate their labels.

Useful for offline experiments and for end-to-end tests when no annotated
corpus is available.
"""
from __future__ import annotations

import numpy as np

from .taxonomy import Category, Dataset, NumeralInstance, Subcategory, Tweet

TICKERS = (
    "AAPL", "TSLA", "MSFT", "AMZN", "NFLX", "BABA", "INTC", "XOM", "GE", "JPM",
    "KO", "NKE", "WMT", "CAT", "IBM", "CSCO", "PFE", "MRK", "BA", "DIS",
)

MONTHS = ("jan", "feb", "march", "april", "may", "june", "july", "aug", "sep", "oct", "nov", "dec")
MONTH_WORDS = ("Jan", "Feb", "March", "April", "May", "June", "July", "Aug", "Sep", "Oct", "Nov", "Dec")


def _price(rng: np.random.Generator) -> str:
    return f"{rng.integers(5, 500)}.{rng.integers(0, 100):02d}"


def _whole(rng: np.random.Generator, lo=5, hi=500) -> str:
    return str(int(rng.integers(lo, hi)))


def _pieces(*parts):
    """Assemble text from strings and (surface, category, subcategory)
    triples, recording exact numeral offsets."""
    text = ""
    numerals = []
    for part in parts:
        if isinstance(part, str):
            text += part
        else:
            surface, category, subcategory = part
            numerals.append((len(text), len(surface), category, subcategory))
            text += surface
    return text, numerals


def _make_tweet(rng: np.random.Generator, kind: str, ticker: str):
    mon = Subcategory
    if kind == "money":
        return _pieces(f"${ticker} raised $", (_whole(rng, 1, 900), "monetary", "money"),
                       " million for the expansion")
    if kind == "quote":
        return _pieces(f"${ticker} trading at ", (_price(rng), "monetary", "quote"), " right now")
    if kind == "change":
        return _pieces(f"${ticker} moved ", (f"+{rng.integers(1, 9)}.{rng.integers(0, 100):02d}",
                                             "monetary", "change"), " today and going strong")
    if kind == "buy_price":
        return _pieces(f"bought ${ticker} at ", (_price(rng), "monetary", "buy_price"),
                       " this morning")
    if kind == "sell_price":
        return _pieces(f"sold my ${ticker} at ", (_price(rng), "monetary", "sell_price"),
                       " for a small win")
    if kind == "forecast":
        return _pieces(f"${ticker} breaking out, targets $", (_price(rng), "monetary", "forecast"))
    if kind == "stop_loss":
        return _pieces(f"${ticker} keep risk tight, stop loss:", (_price(rng), "monetary", "stop_loss"))
    if kind == "support_or_resistance":
        return _pieces(f"${ticker} $", (_whole(rng), "monetary", "support_or_resistance"),
                       " is key resistance here")
    if kind == "relative":
        return _pieces(f"${ticker} up almost ", (_whole(rng, 1, 60), "percentage", "relative"),
                       "% since last week")
    if kind == "absolute":
        return _pieces((_whole(rng, 1, 60), "percentage", "absolute"),
                       f"% of ${ticker} revenue comes from services")
    if kind == "exercise_price":
        word = MONTH_WORDS[rng.integers(0, len(MONTH_WORDS))]
        return _pieces(f"${ticker} long {word} $", (_whole(rng, 10, 200), "option", "exercise_price"),
                       " calls")
    if kind == "maturity_date":
        word = MONTH_WORDS[rng.integers(0, len(MONTH_WORDS))]
        return _pieces(f"${ticker} those {word} ", (_whole(rng, 1, 29), "option", "maturity_date"),
                       " calls were getting hot")
    if kind == "indicator":
        return _pieces(f"${ticker} riding the ", (_whole(rng, 5, 200), "indicator", None),
                       "dma nicely")
    if kind == "date":
        styles = rng.integers(0, 3)
        if styles == 0:
            return _pieces(f"${ticker} gap from ",
                           (f"{rng.integers(1, 13)}/{rng.integers(1, 29)}", "temporal", "date"),
                           " filled")
        if styles == 1:
            return _pieces("Q", (_whole(rng, 1, 5), "temporal", "date"),
                           f" guidance from ${ticker} looks strong")
        return _pieces(f"${ticker} report due in ", (_whole(rng, 2, 9), "temporal", "date"), " days")
    if kind == "time":
        return _pieces(f"${ticker} setting up on the ", (_whole(rng, 1, 60), "temporal", "time"),
                       " min chart")
    if kind == "quantity":
        thousands = f"{rng.integers(1, 20)},{rng.integers(0, 1000):03d}"
        return _pieces("insider unloaded ", (thousands, "quantity", None), f" shares of ${ticker}")
    if kind == "product":
        return _pieces(f"${ticker} losing to #iphone", (_whole(rng, 4, 12), "product", None),
                       " this cycle")
    if kind == "composite":
        values: list[str] = []
        while len(values) < 4:
            v = _whole(rng, 100, 400)
            if v not in values:
                values.append(v)
        stop, quote, res, obj = sorted(values, key=float)
        return _pieces(f"${ticker} ", (quote, "monetary", "quote"),
                       " break-out upper head res ", (res, "monetary", "support_or_resistance"),
                       " nr term obj: ", (obj, "monetary", "forecast"),
                       " stop loss:", (stop, "monetary", "stop_loss"))
    if kind == "pct_pair":
        a, b = rng.integers(1, 40), rng.integers(41, 90)
        return _pieces(f"${ticker} up ", (str(int(a)), "percentage", "relative"),
                       "% this month, segment is ", (str(int(b)), "percentage", "absolute"),
                       "% of revenue overall")
    raise ValueError(f"unknown template {kind!r}")


# Template cycle: composites appear often enough that context has to carry
# the monetary subcategory distinctions.
TEMPLATE_CYCLE = (
    "composite", "quote", "relative", "date", "forecast", "quantity",
    "composite", "money", "absolute", "time", "indicator", "exercise_price",
    "composite", "buy_price", "pct_pair", "stop_loss", "maturity_date", "product",
    "composite", "sell_price", "change", "support_or_resistance", "date", "relative",
)


def generate_dataset(n_tweets: int, seed: int = 0) -> Dataset:
    """Deterministically generate `n_tweets` labeled synthetic tweets."""
    rng = np.random.default_rng(seed)
    tweets = []
    instances = []
    for i in range(n_tweets):
        kind = TEMPLATE_CYCLE[i % len(TEMPLATE_CYCLE)]
        ticker = TICKERS[rng.integers(0, len(TICKERS))]
        text, numerals = _make_tweet(rng, kind, ticker)
        tweet_id = f"syn{i:05d}"
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 28))
        tweets.append(
            Tweet(
                tweet_id=tweet_id,
                text=text,
                timestamp=f"2017-{month:02d}-{day:02d}",
                cashtags=(ticker,),
            )
        )
        for offset, length, category, subcategory in numerals:
            instances.append(
                NumeralInstance(
                    tweet_id=tweet_id,
                    offset=offset,
                    length=length,
                    surface=text[offset : offset + length],
                    category=Category(category),
                    subcategory=Subcategory(subcategory) if subcategory else
                    Subcategory(category),
                )
            )
    return Dataset(tweets=tuple(tweets), instances=tuple(instances))
