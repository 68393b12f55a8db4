#!/usr/bin/env python3
"""Run the Monte Carlo comparison and print the integrated square deviation table.

    python scripts/run_experiment.py --out results/default --seed 20110701
    python scripts/run_experiment.py --out results/quick --seed 1 --replications 50
"""

import argparse
import time
from pathlib import Path

from evdep.cli import write_experiment
from evdep.experiment import ExperimentConfig, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replications", type=int, default=500)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--alphas", default="0.2,0.5,0.8")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args()

    config = ExperimentConfig(alphas=tuple(float(a) for a in args.alphas.split(",")),
                              n=args.n, replications=args.replications, seed=args.seed)
    t0 = time.perf_counter()
    result = run_experiment(config, threads=args.threads)
    write_experiment(result, Path(args.out))
    print(f"{len(config.alphas) * config.replications} replications in {time.perf_counter() - t0:.1f}s")

    table = result.table()
    labels = ["1+2", "1+3", "2+3", "1+2+3"]
    print(f"{'B':>8}" + "".join(f"{'a=' + str(a):>22}" for a in config.alphas))
    print(f"{'':>8}" + "".join(f"{'T':>11}{'T_c':>11}" for _ in config.alphas))
    for B in labels:
        print(f"{B:>8}" + "".join(f"{table[a][B][0]:>11.4f}{table[a][B][1]:>11.4f}" for a in config.alphas))
    print()
    for a, (pr, pp) in result.percent_changed().items():
        print(f"alpha={a}: {pp:.1f}% of (replication, point) pairs changed; "
              f"{pr:.1f}% of replications changed somewhere")


if __name__ == "__main__":
    main()
