"""Hall-Tajvidi corrected Pickands estimator and the derived exponent measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import ExponentSet, Subset, as_subset, enumerate_subsets
from .models import BlockMaximaSample

SIMPLEX_TOL = 1e-12
POINT_MATCH_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HtWeights:
    """Corrected pseudo-observations ``W_B^j`` for one subset and simplex point."""

    subset: Subset
    w: np.ndarray
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def inv_sum(self) -> float:
        return float(np.sum(1.0 / self.values))

    @property
    def log_sum(self) -> float:
        return float(np.sum(np.log(self.values)))


@dataclass(frozen=True)
class PickandsEstimate:
    subset: Subset
    w: np.ndarray
    a_hat: float
    a_tilde: float


def _check_simplex(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or np.any(np.abs(w.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise ValueError("w must lie on the unit simplex")
    return w


def simplex_point(y_B) -> np.ndarray:
    """``(1/y_B) / sum(1/y_B)``, vectorized over leading axes."""
    inv = 1.0 / np.asarray(y_B, dtype=float)
    return inv / inv.sum(axis=-1, keepdims=True)


def _corrected_margins(sample: BlockMaximaSample, B: Subset) -> np.ndarray:
    idx = list(B.indices)
    return sample.data[:, idx] * sample.margin_correction[idx]


def weights_on_points(sample: BlockMaximaSample, B: Subset, w: np.ndarray) -> np.ndarray:
    """``W_B^j`` for a stack of simplex points ``w`` of shape (P, |B|); returns (P, n)."""
    z = _corrected_margins(sample, B)  # (n, |B|)
    return np.max(w[:, None, :] * z[None, :, :], axis=-1)


def ht_weights(sample: BlockMaximaSample, B, w_B) -> HtWeights:
    B = as_subset(B, sample.m)
    if sample.n < 2:
        raise ValueError("the estimator needs at least two block maxima")
    w = _check_simplex(np.ravel(w_B))
    if w.shape != (B.size,):
        raise ValueError(f"w_B needs {B.size} components")
    vals = weights_on_points(sample, B, w[None, :])[0]
    return HtWeights(B, w, vals)


def loglik_A(a: float, W: HtWeights) -> float:
    """Frechet log-likelihood of the scale ``a`` given ``W``."""
    if a <= 0:
        raise ValueError("Pickands value must be positive")
    return W.n * np.log(a) - 2.0 * W.log_sum - a * W.inv_sum


def ht_estimate(W: HtWeights) -> PickandsEstimate:
    a_hat = W.n / W.inv_sum
    return PickandsEstimate(W.subset, W.w, a_hat, min(a_hat, 1.0))


def V_from_A(a, y_B) -> float:
    """Exponent measure ``sum(1/y_B) * a`` from a Pickands value at the matching point."""
    y_B = np.asarray(y_B, dtype=float).ravel()
    if not np.all(y_B > 0):
        raise ValueError("y_B must be strictly positive")
    if isinstance(a, PickandsEstimate):
        if a.w.shape != y_B.shape or np.max(np.abs(a.w - simplex_point(y_B))) > POINT_MATCH_TOL:
            raise ValueError("estimate was computed at a different simplex point")
        a = a.a_tilde
    return float(np.sum(1.0 / y_B) * a)


def pickands_on_points(sample: BlockMaximaSample, B: Subset, y_B: np.ndarray):
    """Raw and clipped Pickands estimates at the simplex points of many ``y_B``.

    Returns ``(a_hat, a_tilde, inv_sums)`` each of shape (P,).
    """
    if sample.n < 2:
        raise ValueError("the estimator needs at least two block maxima")
    W = weights_on_points(sample, B, simplex_point(y_B))
    inv_sums = np.sum(1.0 / W, axis=1)
    a_hat = sample.n / inv_sums
    return a_hat, np.minimum(a_hat, 1.0), inv_sums


def estimate_all(sample: BlockMaximaSample, y) -> ExponentSet:
    """Unconstrained estimates of every ``V_B(y_B)``; may be inconsistent."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape != (sample.m,) or not np.all(y > 0):
        raise ValueError(f"y must be a positive vector of length {sample.m}")
    vals = np.empty((1 << sample.m) - 1)
    for S in enumerate_subsets(sample.m):
        y_B = y[list(S.indices)]
        if S.size == 1:
            vals[S.position] = 1.0 / y_B[0]
            continue
        _, a_tilde, _ = pickands_on_points(sample, S, y_B[None, :])
        vals[S.position] = np.sum(1.0 / y_B) * a_tilde[0]
    return ExponentSet(y, vals)
