"""Joint estimation of all Pickands values at one point under the consistency rows.

The decision variables are ``a_B`` for every subset with ``|B| >= 2``.  The
objective is the pseudo-log-likelihood, a sum of independent concave
terms ``n log a_B - a_B * sum_j 1/W_B^j``.  The feasible set is the polytope

    sum_{B >= M \\ L} sign(B, L) * s_B * a_B >= 0   for every nonempty L
    max(w_B) <= a_B <= 1

where ``s_B = sum_{i in B} 1/y_i`` and singletons enter as the constants
``1/y_i``.  It is solved with a log-barrier interior point method using
damped Newton steps, vectorized over a batch of independent problems.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import lsq_linear, nnls

from .estimate import HtWeights, POINT_MATCH_TOL, loglik_A, simplex_point
from .lattice import ExponentSet, Subset, as_subset, enumerate_subsets, moebius_matrix

log = logging.getLogger(__name__)

# smallest slack accepted at the box-midpoint start; the midpoint can sit on a face
START_MARGIN = 1e-6
# a polished certificate this small needs no further candidate active sets
POLISH_DONE = 1e-13
# residual above which the exhaustive active-set search is run
POLISH_FALLBACK = 1e-12
# slack below which a constraint may belong to the optimal active set
NEAR_ACTIVE = 1e-3
# slack at which a constraint counts as active in the KKT certificate
CERT_ACTIVE = 1e-12


class SolverError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SolverOptions:
    barrier_start: float = 1.0
    barrier_decay: float = 0.2
    gap_tol: float = 1e-9
    newton_tol: float = 1e-12
    max_iter: int = 400
    feasibility_slack: float = 1e-10
    change_tol: float = 1e-12
    active_tol: float = 1e-7

    def __post_init__(self):
        for name in ("barrier_start", "gap_tol", "newton_tol", "feasibility_slack",
                     "change_tol", "active_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.barrier_decay < 1.0:
            raise ValueError("barrier_decay must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Linear rows ``G @ a + h >= 0`` and boxes ``lower <= a <= upper`` at one ``y``."""

    y: np.ndarray
    variables: list
    s: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    m: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "m", len(self.y))

    @property
    def row_subsets(self) -> list[Subset]:
        return enumerate_subsets(self.m)

    def rows(self, a) -> np.ndarray:
        """The ``d_L`` values implied by Pickands values ``a``; one per L."""
        return self.G @ np.asarray(a, dtype=float) + self.h

    def exponent_set(self, a) -> ExponentSet:
        vals = np.empty((1 << self.m) - 1)
        for i in range(self.m):
            vals[(1 << i) - 1] = 1.0 / self.y[i]
        for B, s, ab in zip(self.variables, self.s, np.asarray(a, dtype=float)):
            vals[B.position] = s * ab
        return ExponentSet(self.y, vals)

    def is_feasible(self, a, slack: float = 0.0) -> bool:
        a = np.asarray(a, dtype=float)
        return bool(
            np.all(self.rows(a) >= -slack)
            and np.all(a >= self.lower - slack)
            and np.all(a <= self.upper + slack)
        )


def pickands_variables(m: int) -> list[Subset]:
    return [S for S in enumerate_subsets(m) if S.size >= 2]


def _var_positions(m: int):
    vars_ = pickands_variables(m)
    var_cols = np.array([S.position for S in vars_])
    single_cols = np.array([(1 << i) - 1 for i in range(m)])
    masks = np.array([[S.bits >> i & 1 for i in range(m)] for S in vars_], dtype=bool)
    return vars_, var_cols, single_cols, masks


def build_batch(ys) -> dict:
    """Constraint data for a stack of points ``ys`` of shape (P, m)."""
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if not np.all(ys > 0):
        raise ValueError("evaluation points must be strictly positive")
    m = ys.shape[1]
    M = moebius_matrix(m)
    vars_, var_cols, single_cols, masks = _var_positions(m)
    inv = 1.0 / ys  # (P, m)
    s = np.stack([inv[:, mk].sum(axis=1) for mk in masks], axis=1)  # (P, nv)
    lower = np.stack([inv[:, mk].max(axis=1) for mk in masks], axis=1) / s
    G = M[None, :, var_cols] * s[:, None, :]  # (P, R, nv)
    h = inv @ M[:, single_cols].T  # (P, R)
    return dict(m=m, y=ys, variables=vars_, s=s, G=G, h=h, lower=lower,
                upper=np.ones_like(lower))


def build_constraints(y, m: int | None = None) -> ConstraintSystem:
    y = np.asarray(y, dtype=float).ravel()
    if m is not None and len(y) != m:
        raise ValueError(f"y has {len(y)} coordinates, expected {m}")
    b = build_batch(y[None, :])
    return ConstraintSystem(y, b["variables"], b["s"][0], b["G"][0], b["h"][0],
                            b["lower"][0], b["upper"][0])


def pseudo_loglik(a, weights: Mapping[Subset, HtWeights]) -> float:
    """Sum of per-subset Frechet log-likelihoods, ``a`` ordered like ``weights``."""
    a = np.asarray(a, dtype=float).ravel()
    Ws = list(weights.values())
    if len(a) != len(Ws):
        raise ValueError("one Pickands value per subset is required")
    if np.any(a <= 0):
        raise ValueError("Pickands values must be positive")
    return float(sum(loglik_A(ab, W) for ab, W in zip(a, Ws)))


@dataclass(frozen=True)
class ConstrainedEstimate:
    a: dict
    exponent: ExponentSet
    kkt_residual: float
    active_set: list
    changed: bool
    iterations: int


# --- batched barrier solver -------------------------------------------------


def _full_constraints(G, h, lower, upper):
    """Stack rows and both boxes into ``C @ a + c0 >= 0``."""
    P, R, nv = G.shape
    eye = np.broadcast_to(np.eye(nv), (P, nv, nv))
    C = np.concatenate([G, eye, -eye], axis=1)
    c0 = np.concatenate([h, -lower, upper], axis=1)
    return C, c0


def _slack(C, c0, a):
    return np.einsum("pij,pj->pi", C, a) + c0


def _kkt_from_barrier(a, rate, C, g, mu):
    lam = mu[:, None] / g
    grad_f = 1.0 / a - rate
    stat = grad_f + np.einsum("pij,pi->pj", C, lam)
    prim = np.maximum(0.0, -g.min(axis=1))
    comp = (lam * g).max(axis=1)
    return np.maximum.reduce([np.abs(stat).max(axis=1), comp, prim]), lam


def _interior_start(batch, C, c0):
    """A strictly feasible point per problem.

    Tries the box midpoint first, then the logistic family (which is strictly
    interior for 0 < alpha < 1) at the alpha maximizing the smallest slack.
    """
    lower = batch["lower"]
    a0 = 0.5 * (lower + 1.0)
    g0 = _slack(C, c0, a0)
    ok = g0.min(axis=1) > START_MARGIN
    if ok.all():
        return a0
    ys = batch["y"][~ok]
    best_a = None
    best_g = np.full(len(ys), -np.inf)
    for alpha in np.linspace(0.05, 0.95, 19):
        cand = np.stack([_logistic_pickands(alpha, ys, B) for B in batch["variables"]], axis=1)
        g = _slack(C[~ok], c0[~ok], cand).min(axis=1)
        if best_a is None:
            best_a, best_g = cand, g
        else:
            better = g > best_g
            best_a[better] = cand[better]
            best_g[better] = g[better]
    if np.any(best_g <= 0):
        raise SolverError("could not find a strictly feasible starting point")
    a0[~ok] = best_a
    return a0


def _logistic_pickands(alpha, ys, B: Subset):
    yb = ys[:, list(B.indices)]
    lo = yb.min(axis=1, keepdims=True)
    v = np.sum((lo / yb) ** (1.0 / alpha), axis=1) ** alpha / lo[:, 0]
    return v / np.sum(1.0 / yb, axis=1)


def _barrier_value(a, rate, g, mu):
    return -np.sum(np.log(a) - rate * a, axis=1) - mu[:, 0] * np.sum(np.log(g), axis=1)


def solve_batch(batch: dict, n: int, inv_sums, opts: SolverOptions | None = None):
    """Maximize the pseudo-log-likelihood for every problem in ``batch``.

    ``inv_sums`` has shape (P, nv) and holds ``sum_j 1/W_B^j``.  Returns a
    dict of arrays: ``a`` (P, nv), ``kkt`` (P,), ``changed`` (P,) and
    ``iterations`` (P,).
    """
    opts = opts or SolverOptions()
    inv_sums = np.atleast_2d(np.asarray(inv_sums, dtype=float))
    G, h, lower, upper = batch["G"], batch["h"], batch["lower"], batch["upper"]
    P, R, nv = G.shape
    rate = inv_sums / n  # normalized objective: sum log a - rate * a
    clipped = np.minimum(n / inv_sums, 1.0)

    C, c0 = _full_constraints(G, h, lower, upper)
    a = clipped.copy()
    kkt = np.zeros(P)
    iters = np.zeros(P, dtype=int)

    g_clip = _slack(C, c0, clipped)
    feasible = g_clip.min(axis=1) >= -opts.feasibility_slack
    if feasible.any():
        kkt[feasible] = _short_circuit_kkt(clipped[feasible], rate[feasible],
                                           C[feasible], g_clip[feasible], opts)
    todo = np.flatnonzero(~feasible)
    if todo.size:
        sub = {k: (v[todo] if isinstance(v, np.ndarray) else v) for k, v in batch.items()}
        a_s, kkt_s, it_s = _barrier(sub, C[todo], c0[todo], rate[todo], opts)
        a[todo], kkt[todo], iters[todo] = a_s, kkt_s, it_s
    changed = np.abs(a - clipped).max(axis=1) > opts.change_tol
    return dict(a=a, kkt=kkt, changed=changed, iterations=iters, clipped=clipped)


def _short_circuit_kkt(a, rate, C, g, opts):
    # Only the upper box can be active at a clipped estimate; its multiplier
    # absorbs the positive gradient there.
    grad_f = 1.0 / a - rate
    at_one = a >= 1.0
    stat = np.where(at_one, np.minimum(grad_f, 0.0), grad_f)
    prim = np.maximum(0.0, -g.min(axis=1))
    return np.maximum(np.abs(stat).max(axis=1), prim)


def _barrier(batch, C, c0, rate, opts):
    P, K, nv = C.shape
    a = _interior_start(batch, C, c0)
    mu = np.full(P, opts.barrier_start)
    mu_stop = opts.gap_tol / K
    iters = np.zeros(P, dtype=int)
    done = np.zeros(P, dtype=bool)
    total = 0
    while not done.all():
        total += 1
        if total > opts.max_iter:
            g = _slack(C, c0, a)
            res, _ = _kkt_from_barrier(a, rate, C, g, mu)
            bad = np.flatnonzero(~done)
            raise SolverError(
                f"barrier solver did not converge for {bad.size} problem(s) "
                f"after {opts.max_iter} iterations", float(res[bad].max()))
        act = np.flatnonzero(~done)
        aa, cc, c00, rr, mm = a[act], C[act], c0[act], rate[act], mu[act]
        g = _slack(cc, c00, aa)
        inv_g = 1.0 / g
        grad = -(1.0 / aa - rr) - mm[:, None] * np.einsum("pij,pi->pj", cc, inv_g)
        w = mm[:, None] * inv_g**2
        H = np.matmul(cc.transpose(0, 2, 1), cc * w[:, :, None])
        H[:, np.arange(nv), np.arange(nv)] += 1.0 / aa**2
        step = -np.linalg.solve(H, grad[..., None])[..., 0]
        slope = np.sum(grad * step, axis=1)
        centred = -0.5 * slope <= opts.newton_tol

        # damped step: stay strictly inside, then Armijo backtracking
        dg = np.einsum("pij,pj->pi", cc, step)
        ratio = np.where(dg < 0, -g / np.where(dg < 0, dg, -1.0), np.inf)
        t = np.minimum(1.0, 0.99 * ratio.min(axis=1))
        t = np.minimum(t, np.where(step < 0, -0.99 * aa / np.where(step < 0, step, -1.0), np.inf).min(axis=1))
        phi0 = _barrier_value(aa, rr, g, mm[:, None])
        pending = ~centred
        for _ in range(60):
            if not pending.any():
                break
            cand = aa + t[:, None] * step
            gc = _slack(cc, c00, cand)
            okg = gc.min(axis=1) > 0
            phi = np.full(len(act), np.inf)
            phi[okg] = _barrier_value(cand[okg], rr[okg], gc[okg], mm[okg][:, None])
            accept = okg & (phi <= phi0 + 0.01 * t * slope)
            pending &= ~accept
            t = np.where(pending, 0.5 * t, t)
        move = ~centred & ~pending
        aa = np.where(move[:, None], aa + t[:, None] * step, aa)
        # a line search stalled by round-off means no further progress is possible
        centred |= pending
        a[act] = aa
        iters[act] += 1

        fin = centred & (mm <= mu_stop)
        done[act[fin]] = True
        shrink = centred & ~fin
        mu[act[shrink]] *= opts.barrier_decay
    g = _slack(C, c0, a)
    res, lam = _kkt_from_barrier(a, rate, C, g, mu)
    for p in range(P):
        # strictly complementary constraints first; near-degenerate faces,
        # where a multiplier is too small to separate from its slack, are
        # covered by the nested sets of tightest and most-loaded constraints
        by_slack = np.argsort(g[p], kind="stable")
        by_load = np.argsort(-lam[p], kind="stable")
        candidates = [np.flatnonzero(lam[p] >= g[p])]
        candidates += [by_slack[:k] for k in range(nv + 1)]
        candidates += [by_load[:k] for k in range(1, nv + 1)]
        tried = set()
        for idx in candidates:
            key = tuple(sorted(int(i) for i in idx))
            if key in tried:
                continue
            tried.add(key)
            cand, cres = _polish(a[p], rate[p], C[p], c0[p], np.array(key, dtype=int))
            if cres < res[p]:
                a[p], res[p] = cand, cres
            if res[p] <= POLISH_DONE:
                break
        if res[p] > POLISH_FALLBACK:
            # exhaustive search over small subsets of the near-active constraints
            near = np.flatnonzero(g[p] <= NEAR_ACTIVE)
            for k in range(1, min(nv, near.size) + 1):
                for key in itertools.combinations(near.tolist(), k):
                    if key in tried:
                        continue
                    tried.add(key)
                    cand, cres = _polish(a[p], rate[p], C[p], c0[p], np.array(key, dtype=int))
                    if cres < res[p]:
                        a[p], res[p] = cand, cres
                if res[p] <= POLISH_DONE:
                    break
    return a, res, iters


def _polish(a, rate, C, c0, active, newton_steps: int = 8):
    """Re-solve with the barrier's active constraints held as equalities.

    The barrier iterate sits a distance ~mu/lambda inside each active
    constraint, which limits its stationarity to roughly mu/g round-off.
    Holding the identified active set at equality and solving the reduced
    problem by Newton's method removes that floor.  Multipliers come from
    a nonnegative least-squares fit, so the returned residual is a genuine
    KKT certificate.
    """
    if active.size == 0:
        x = 1.0 / rate
        if np.all(C @ x + c0 >= 0):
            return x, float(np.abs(1.0 / x - rate).max())
        return a, np.inf
    CA = C[active]
    x = a.copy()
    nv = len(x)
    k = len(active)
    for _ in range(newton_steps):
        grad = 1.0 / x - rate
        K = np.zeros((nv + k, nv + k))
        K[:nv, :nv] = np.diag(1.0 / x**2)
        K[:nv, nv:] = CA.T
        K[nv:, :nv] = CA
        rhs = np.concatenate([grad, -(CA @ x + c0[active])])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        x = x + sol[:nv]
        if np.any(x <= 0):
            return a, np.inf
        if np.abs(sol[:nv]).max() <= 1e-15 * np.abs(x).max():
            break
    grad = 1.0 / x - rate
    gx = C @ x + c0
    prim = max(0.0, -gx.min())
    if prim > CERT_ACTIVE:
        return a, np.inf
    # multipliers may sit on any constraint active at x, which matters at
    # degenerate vertices where more constraints meet than there are variables
    cert = np.union1d(active, np.flatnonzero(gx <= CERT_ACTIVE))
    lam_a, stat = _multipliers(C[cert].T, grad)
    comp = float(np.max(lam_a * np.maximum(gx[cert], 0.0)))
    return x, float(max(stat, prim, comp))


def _multipliers(A, grad):
    """Nonnegative ``lam`` minimizing ``|grad + A @ lam|``; returns it and the max residual.

    Two solvers are tried and the residual is recomputed, because the
    active-set NNLS routine can stop at a wrong vertex on wide, degenerate
    systems while reporting a zero residual.
    """
    best_lam, best = None, np.inf
    lam, _ = nnls(A, -grad)
    cands = [lam]
    if A.shape[1] > 0:
        cands.append(lsq_linear(A, -grad, bounds=(0.0, np.inf), method="bvls", tol=1e-15).x)
    for lam in cands:
        lam = np.maximum(lam, 0.0)
        r = float(np.abs(grad + A @ lam).max())
        if r < best:
            best_lam, best = lam, r
    return best_lam, best


# --- single-problem interface -----------------------------------------------


def _ordered_weights(weights: Mapping, y: np.ndarray) -> list[HtWeights]:
    m = len(y)
    by_subset = {as_subset(k, m): W for k, W in weights.items()}
    out = []
    for B in pickands_variables(m):
        if B not in by_subset:
            raise ValueError(f"missing weights for subset {B}")
        W = by_subset[B]
        if np.max(np.abs(W.w - simplex_point(y[list(B.indices)]))) > POINT_MATCH_TOL:
            raise ValueError(f"weights for {B} were built at a different point")
        out.append(W)
    if len({W.n for W in out}) != 1:
        raise ValueError("all weights must come from the same sample")
    return out


def solve_constrained(weights: Mapping[Subset, HtWeights], y,
                      opts: SolverOptions | None = None) -> ConstrainedEstimate:
    """Constrained maximum pseudo-likelihood Pickands values at ``y``.

    Returns the clipped unconstrained estimates unchanged whenever they
    already satisfy every row and box.
    """
    opts = opts or SolverOptions()
    y = np.asarray(y, dtype=float).ravel()
    Ws = _ordered_weights(weights, y)
    system = build_constraints(y)
    batch = build_batch(y[None, :])
    inv_sums = np.array([[W.inv_sum for W in Ws]])
    out = solve_batch(batch, Ws[0].n, inv_sums, opts)
    a = out["a"][0]
    rows = system.rows(a)
    active = [L for L, r in zip(system.row_subsets, rows) if r <= opts.active_tol]
    return ConstrainedEstimate(
        a={B: float(v) for B, v in zip(system.variables, a)},
        exponent=system.exponent_set(a),
        kkt_residual=float(out["kkt"][0]),
        active_set=active,
        changed=bool(out["changed"][0]),
        iterations=int(out["iterations"][0]),
    )
