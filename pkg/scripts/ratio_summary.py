#!/usr/bin/env python3
"""Summarize RMSE ratios (constrained / unconstrained) from an experiment's rmse.csv.

    python scripts/ratio_summary.py results/default/rmse.csv
"""

import argparse
import csv
from collections import defaultdict

import numpy as np


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("rmse_csv")
    p.add_argument("--bins", type=int, default=10)
    args = p.parse_args()

    ratios = defaultdict(list)
    with open(args.rmse_csv) as fh:
        for row in csv.DictReader(fh):
            if row["ratio"]:
                ratios[(float(row["alpha"]), row["B"])].append(float(row["ratio"]))

    print(f"{'alpha':>6} {'B':>6} {'points':>7} {'min':>8} {'median':>8} {'max':>8} "
          f"{'<1':>7} {'in[.98,1.02]':>13}")
    for (alpha, B), r in sorted(ratios.items()):
        r = np.array(r)
        print(f"{alpha:>6} {B:>6} {len(r):>7} {r.min():>8.4f} {np.median(r):>8.4f} {r.max():>8.4f} "
              f"{np.mean(r < 1):>7.1%} {np.mean((r >= 0.98) & (r <= 1.02)):>13.1%}")
    for (alpha, B), r in sorted(ratios.items()):
        if B != "1+2+3":
            continue
        counts, edges = np.histogram(r, bins=args.bins)
        print(f"\nalpha={alpha}, B={B}")
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            print(f"  [{lo:.3f}, {hi:.3f})  {'#' * int(60 * c / max(counts.max(), 1))} {c}")


if __name__ == "__main__":
    main()
