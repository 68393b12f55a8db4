#!/usr/bin/env python3
"""Stress the constrained solver on random trivariate problems and report KKT residuals.

    python scripts/solver_stress.py --problems 5000 --seed 3
"""

import argparse
import time

import numpy as np

from evdep.constrain import build_batch, pickands_variables, solve_batch
from evdep.estimate import ht_weights, simplex_point
from evdep.models import LogisticModel, RngStream, sample_logistic


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--problems", type=int, default=2000)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter", type=float, default=0.0,
                   help="log-normal noise on the reciprocal sums, to push problems off the feasible set")
    args = p.parse_args()

    g = np.random.default_rng(args.seed)
    ys, inv = [], []
    for k in range(args.problems):
        alpha = g.uniform(0.02, 1.0)
        y = np.exp(g.uniform(np.log(0.3), np.log(20.0), 3))
        s = sample_logistic(LogisticModel(alpha, 3), args.n, RngStream(args.seed, k))
        inv.append([ht_weights(s, B, simplex_point(y[list(B.indices)])).inv_sum
                    for B in pickands_variables(3)])
        ys.append(y)
    inv = np.array(inv) * np.exp(g.normal(0.0, args.jitter, (args.problems, 4)))
    t0 = time.perf_counter()
    out = solve_batch(build_batch(np.array(ys)), args.n, inv)
    dt = time.perf_counter() - t0
    kkt = out["kkt"]
    print(f"{args.problems} problems, {int(out['changed'].sum())} changed, {dt:.2f}s")
    print(f"KKT residual: max {kkt.max():.2e}, median over changed "
          f"{np.median(kkt[out['changed']]) if out['changed'].any() else 0:.2e}")
    print(f"barrier iterations over changed: max {out['iterations'].max()}")


if __name__ == "__main__":
    main()
