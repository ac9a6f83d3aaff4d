#!/usr/bin/env python3
"""Write synthetic ticker CSVs so the CLI can be tried without market data.

    python scripts/make_synthetic_data.py data/
    candlecast grid --config scripts/synthetic.ini
"""

import argparse
from pathlib import Path

from candlecast.market_data import serialize_csv
from candlecast.synthetic import momentum_series, random_walk_series


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", type=Path)
    p.add_argument("--bars", type=int, default=2000)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for series in (momentum_series(args.bars, args.seed), random_walk_series(args.bars, args.seed)):
        path = args.out / f"{series.ticker}.csv"
        path.write_text(serialize_csv(series))
        print(f"{path}: {len(series)} bars {series.bars[0].date} .. {series.bars[-1].date}")


if __name__ == "__main__":
    main()
