#!/usr/bin/env python3
"""Epochs the dimension-20 network needs to memorise 32 balanced chart images."""

import argparse
import time

from candlecast.experiments import overfit


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--period", type=int, default=20)
    args = p.parse_args()
    t0 = time.perf_counter()
    epoch, acc = overfit(period=args.period, max_epochs=args.max_epochs, seed=args.seed)
    print(f"accuracy {acc:.3f} reached at epoch {epoch} in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
