"""Writes fixtures/AAPL.json: a synthetic chart-API payload for AAPL.

No recorded AAPL response is available offline, so the bars come from a
GARCH(1,1) return process with a slow log-variance regime, sampled on
weekdays from 2010-01-04 to 2023-12-29. The output is deterministic.
"""

import datetime as dt
import json
import math
import pathlib

import numpy as np

SEED = 20100104
START = dt.date(2010, 1, 4)
END = dt.date(2023, 12, 29)
GMT_OFFSET = -18000  # US/Eastern standard time


def weekdays(start, end):
    d = start
    while d <= end:
        if d.weekday() < 5:
            yield d
        d += dt.timedelta(days=1)


def main():
    rng = np.random.default_rng(SEED)
    days = list(weekdays(START, END))
    n = len(days)

    # slow regime: AR(1) in log daily variance
    regime = np.zeros(n)
    for t in range(1, n):
        regime[t] = 0.997 * regime[t - 1] + 0.03 * rng.standard_normal()

    omega, alpha, beta = 2e-6, 0.08, 0.90
    base = omega / (1 - alpha - beta)
    h = base
    close = 7.5
    opens, highs, lows, closes, volumes, stamps = [], [], [], [], [], []
    for t, day in enumerate(days):
        h = omega + alpha * (h * rng.standard_normal() ** 2) + beta * h
        sigma = math.sqrt(h * math.exp(regime[t]))
        ret = 0.0004 + sigma * rng.standard_normal()
        prev = close
        close = prev * math.exp(ret)
        open_ = prev * math.exp(0.2 * sigma * rng.standard_normal())
        hi = max(open_, close) * math.exp(abs(0.5 * sigma * rng.standard_normal()))
        lo = min(open_, close) * math.exp(-abs(0.5 * sigma * rng.standard_normal()))
        vol = int(4e8 * math.exp(0.3 * rng.standard_normal()) * (1 + 30 * sigma))
        ts = int(dt.datetime(day.year, day.month, day.day, 14, 30, tzinfo=dt.timezone.utc).timestamp())
        stamps.append(ts)
        opens.append(round(open_, 6))
        highs.append(round(hi, 6))
        lows.append(round(lo, 6))
        closes.append(round(close, 6))
        volumes.append(vol)

    payload = {
        "chart": {
            "result": [
                {
                    "meta": {"symbol": "AAPL", "gmtoffset": GMT_OFFSET, "dataGranularity": "1d"},
                    "timestamp": stamps,
                    "indicators": {
                        "quote": [
                            {"open": opens, "high": highs, "low": lows, "close": closes, "volume": volumes}
                        ]
                    },
                }
            ],
            "error": None,
        }
    }
    out = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "AAPL.json"
    out.write_text(json.dumps(payload, separators=(",", ":")) + "\n")
    print(f"wrote {n} bars to {out}")


if __name__ == "__main__":
    main()
