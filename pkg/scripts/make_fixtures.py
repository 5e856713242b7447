"""Regenerate the bundled fixture files (tweets, prices, analyst forecasts).

The tweet fixture pairs each detected numeral span with its gold label in
detection order, so annotated offsets always agree with the detector.
"""
import datetime as dt
import json
from pathlib import Path

import numpy as np

from numfin.textprep import detect_numerals

ROOT = Path(__file__).resolve().parents[1] / "src" / "numfin" / "resources" / "fixtures"

# (text, timestamp, [(category, subcategory), ...] aligned with detection order)
TWEETS = [
    ("$TSLA 256 Break-out thru 50 & 200- DMA (197-230) upper head res (274-279) "
     "Short squeeze in progress Nr term obj: 310 Stop loss:239.",
     "2017-01-09",
     [("monetary", "quote"), ("indicator", None), ("indicator", None),
      ("monetary", "quote"), ("monetary", "quote"),
      ("monetary", "support_or_resistance"), ("monetary", "support_or_resistance"),
      ("monetary", "forecast"), ("monetary", "stop_loss")]),
    ("MarketWatch: RT wmwitkowski: Guess who sold off about $800 million in $MDLZ "
     "after losing about $1 billion on $VRX???",
     "2017-02-03",
     [("monetary", "money"), ("monetary", "money")]),
    ("$NVDA Sunday watchlist entry from MON +2.00 and going now someone bought lots of calls MON",
     "2017-02-12",
     [("monetary", "change")]),
    ("$SPY Long 1/2 position 137.89",
     "2017-03-01",
     [("quantity", None), ("monetary", "buy_price")]),
    ("$KOG Took a small position hopefully a better outcome than getting kneecapped "
     "by $BEXP selling itself dirt cheap at 36.50",
     "2017-03-17",
     [("monetary", "sell_price")]),
    ("$CIEN, CIEN seems to have broken out of a major horizontal resistance. Targets $14.35.",
     "2017-04-06",
     [("monetary", "forecast")]),
    ("$CTRP, $46 Breakout Should be Confirmed with Wm%R Stochastic Up",
     "2017-04-21",
     [("monetary", "support_or_resistance")]),
    ("¢Den up almost 10% since Q1 and £auro up around 7.5%, much more $ for "
     "$AAPL pocket. Remember 23% of Apple revenues comes from this two @jimcramer",
     "2017-05-02",
     [("percentage", "relative"), ("temporal", "date"),
      ("percentage", "relative"), ("percentage", "absolute")]),
    ("$XLU long April $44 calls",
     "2017-05-19",
     [("option", "exercise_price")]),
    ("$MSFT those APR.22 CALLS were getting hot...",
     "2017-06-08",
     [("option", "maturity_date")]),
    ("$ATHX riding 5dma higher, dropping to 13dma at the dips, sign of a healthy "
     "advancing stock that stays above 20dma",
     "2017-06-27",
     [("indicator", None), ("indicator", None), ("indicator", None)]),
    ("$AAPL 8/17 gap filled",
     "2017-07-14",
     [("temporal", "date")]),
    ("$AAPL wants lower. up waves getting smaller on the 2 min",
     "2017-08-07",
     [("temporal", "time")]),
    ("$NTRS Insider Trading: Clair St Unloaded 5,838 Shares of Northern Trust "
     "Corporation (NASDAQ:NTRS)",
     "2017-08-30",
     [("quantity", None)]),
    ("If the camera is protruding like that, $AAPL is losing to #samsung #iphone7 #samsunggalaxy",
     "2017-09-15",
     [("product", None)]),
    ("$AAPL could be testing $425 in days",
     "2017-10-04",
     [("monetary", "support_or_resistance")]),
    ("Sold 1/2 position @$5.70 +$.80 @rsblades Long $AMZN Oct $240 Calls @$4.90",
     "2017-10-23",
     [("quantity", None), ("monetary", "sell_price"), ("monetary", "change"),
      ("option", "exercise_price"), ("monetary", "buy_price")]),
]

# (tweet index, detection index) -> annotation triple; everything else is
# unanimous on the gold leaf. T16's level echoes a genuinely contested case.
DISAGREEMENTS = {
    (0, 7): ["forecast", "forecast", "quote"],
    (0, 8): ["stop_loss", "stop_loss", "sell_price"],
    (4, 0): ["sell_price", "sell_price", "quote"],
    (7, 3): ["absolute", "absolute", "relative"],
    (15, 0): ["quote", "forecast", "support_or_resistance"],
    (16, 2): ["change", "change", "money"],
}

SOLE_LEAF = {"indicator": "indicator", "quantity": "quantity", "product": "product"}


def first_cashtag(text):
    import re
    m = re.search(r"\$([A-Za-z][A-Za-z._]*)", text)
    return m.group(1).upper() if m else None


def make_tweets():
    out = ROOT / "paper_tweets.jsonl"
    lines = []
    total = 0
    for t_idx, (text, timestamp, labels) in enumerate(TWEETS):
        spans = detect_numerals(text)
        assert len(spans) == len(labels), (text, spans, labels)
        instances = []
        for d_idx, ((offset, length, surface), (category, subcategory)) in enumerate(zip(spans, labels)):
            leaf = subcategory or SOLE_LEAF[category]
            annotations = DISAGREEMENTS.get((t_idx, d_idx), [leaf, leaf, leaf])
            instances.append({
                "offset": offset, "length": length,
                "category": category, "subcategory": leaf,
                "annotations": annotations,
            })
            total += 1
        obj = {
            "tweet_id": f"T{t_idx + 1}",
            "text": text,
            "timestamp": timestamp,
            "instances": instances,
        }
        tag = first_cashtag(text)
        if tag:
            obj["cashtags"] = [tag]
        lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(lines)} tweets, {total} instances)")


def make_prices():
    rng = np.random.default_rng(20170101)
    tickers = {"TSLA": 230.0, "CIEN": 13.0, "AAA": 100.0, "BBB": 50.0, "CCC": 200.0}
    rows = ["date,ticker,open,high,low,close"]
    day = dt.date(2017, 1, 2)
    closes = dict(tickers)
    while day <= dt.date(2018, 5, 14):
        if day.weekday() < 5:
            for ticker in tickers:
                prev = closes[ticker]
                nxt = prev * float(np.exp(rng.normal(0.0004, 0.015)))
                o, c = prev, nxt
                h = max(o, c) * 1.004
                l = min(o, c) * 0.996
                rows.append(f"{day.isoformat()},{ticker},{o:.2f},{h:.2f},{l:.2f},{c:.2f}")
                closes[ticker] = round(nxt, 2)
        day += dt.timedelta(days=1)
    (ROOT / "prices.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote prices.csv ({len(rows) - 1} bars)")


def make_analyst():
    rng = np.random.default_rng(7)
    rows = ["ticker,month,forecast"]
    for ticker, base in [("TSLA", 250.0), ("CIEN", 14.0), ("AAA", 105.0), ("BBB", 52.0), ("CCC", 210.0)]:
        for month in range(1, 11):
            f = base * float(rng.uniform(0.9, 1.15))
            rows.append(f"{ticker},2017-{month:02d},{f:.2f}")
    (ROOT / "analyst.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote analyst.csv ({len(rows) - 1} rows)")


if __name__ == "__main__":
    make_tweets()
    make_prices()
    make_analyst()
