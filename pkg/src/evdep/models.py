"""Symmetric logistic max-stable model, exact sampling, unit Frechet helpers."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .lattice import ExponentSet, Subset, as_subset, enumerate_subsets

MIN_SAMPLER_ALPHA = 1e-3
EXP_FLOOR = 1e-300


@dataclass(frozen=True)
class LogisticModel:
    """Logistic dependence: ``V_B(y) = (sum_i y_i^(-1/alpha))^alpha``."""

    alpha: float
    m: int = 3

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 1 <= self.m <= 16:
            raise ValueError(f"dimension must be in [1, 16], got {self.m}")


class RngStream:
    """Independent, reproducible random stream keyed by ``(seed, stream)``.

    ``stream`` may be an int or a tuple of ints; streams with different keys
    are statistically independent no matter in which order they are used.
    """

    def __init__(self, seed: int, stream: int | Sequence[int] = 0):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        key = (stream,) if np.isscalar(stream) else tuple(stream)
        self.seed = int(seed)
        self.stream = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def _check_positive(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all(y > 0):
        raise ValueError("evaluation points must be strictly positive")
    return y


def logistic_V(model: LogisticModel, B, y_B) -> float:
    B = as_subset(B, model.m)
    y_B = _check_positive(y_B).ravel()
    if y_B.shape != (B.size,):
        raise ValueError(f"y_B needs {B.size} coordinates, got {y_B.size}")
    return float(_logistic_V(model.alpha, y_B))


def _logistic_V(alpha: float, y: np.ndarray) -> np.ndarray:
    """Vectorized over leading axes; the last axis runs over the subset."""
    if alpha == 1.0:
        return np.sum(1.0 / y, axis=-1)
    # factor out the largest term to keep y^(-1/alpha) in range for small alpha
    lo = np.min(y, axis=-1, keepdims=True)
    r = np.sum((lo / y) ** (1.0 / alpha), axis=-1)
    return r**alpha / lo[..., 0]


def logistic_evaluation_set(model: LogisticModel, y) -> ExponentSet:
    y = _check_positive(y).ravel()
    if y.shape != (model.m,):
        raise ValueError(f"y needs {model.m} coordinates")
    vals = np.empty((1 << model.m) - 1)
    for S in enumerate_subsets(model.m):
        vals[S.position] = _logistic_V(model.alpha, y[list(S.indices)])
    for i in range(model.m):
        vals[(1 << i) - 1] = 1.0 / y[i]
    return ExponentSet(y, vals)


def frechet_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must be in (0, 1), got {p}")
    return -1.0 / np.log(p)


def frechet_cdf(y):
    y = np.asarray(y, dtype=float)
    return np.exp(-1.0 / y)


def pickands_from_V(V_B: float, y_B) -> float:
    """Pickands function value ``V_B / sum(1/y_i)`` at ``w = (1/y_B) / sum(1/y_B)``."""
    y_B = _check_positive(y_B)
    if V_B < 0:
        raise ValueError("exponent measure must be nonnegative")
    return float(V_B / np.sum(1.0 / y_B))


def _log_positive_stable(alpha: float, gen: np.random.Generator, size) -> np.ndarray:
    # Chambers-Mallows-Stuck / Kanter representation, in logs to avoid overflow
    u = gen.uniform(0.0, np.pi, size)
    w = np.maximum(gen.standard_exponential(size), EXP_FLOOR)
    return (
        np.log(np.sin(alpha * u))
        - np.log(np.sin(u)) / alpha
        + (1.0 - alpha) / alpha * (np.log(np.sin((1.0 - alpha) * u)) - np.log(w))
    )


def sample_positive_stable(alpha: float, rng: RngStream, size=None):
    """Draw ``T >= 0`` with Laplace transform ``E exp(-t T) = exp(-t^alpha)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"positive stable index must be in (0, 1), got {alpha}")
    out = np.exp(_log_positive_stable(alpha, rng.generator, size))
    return float(out) if size is None else out


@dataclass(frozen=True, eq=False)
class BlockMaximaSample:
    """``n`` componentwise maxima on the unit Frechet scale, one row each."""

    data: np.ndarray
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("sample must be a nonempty n x m matrix")
        if not np.all(data > 0) or not np.all(np.isfinite(data)):
            raise ValueError("block maxima must be strictly positive and finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "n", data.shape[0])
        object.__setattr__(self, "m", data.shape[1])

    @cached_property
    def margin_correction(self) -> np.ndarray:
        """Per-margin mean reciprocal, ``c_i = mean_j 1 / Y_i^j``."""
        return np.mean(1.0 / self.data, axis=0)

    def block_maxima(self, d: int) -> "BlockMaximaSample":
        """Componentwise maxima of ``d`` consecutive rows, rescaled by ``1/d``."""
        if d < 1 or self.n < d:
            raise ValueError("block size must be between 1 and n")
        k = self.n // d
        blocks = self.data[: k * d].reshape(k, d, self.m)
        return BlockMaximaSample(blocks.max(axis=1) / d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j"] + [f"y{i + 1}" for i in range(self.m)])
        for j, row in enumerate(self.data, start=1):
            w.writerow([j] + [f"{v:.17g}" for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BlockMaximaSample":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty CSV")
        header = [h.strip() for h in rows[0]]
        m = len(header) - 1
        if m < 1 or header != ["j"] + [f"y{i + 1}" for i in range(m)]:
            raise ValueError(f"unexpected CSV header {rows[0]!r}")
        body = [r for r in rows[1:] if r]
        try:
            data = [[float(v) for v in r[1:]] for r in body]
        except ValueError as exc:
            raise ValueError(f"malformed CSV value: {exc}") from None
        if any(len(r) != m for r in data):
            raise ValueError("ragged CSV rows")
        return cls(np.array(data, dtype=float).reshape(len(data), m))


def sample_logistic(model: LogisticModel, n: int, rng: RngStream) -> BlockMaximaSample:
    """Exact draws from the logistic max-stable law with unit Frechet margins.

    Uses ``Y_i = (T / E_i) ** alpha`` with ``T`` positive alpha-stable and
    ``E_i`` iid standard exponential; ``alpha = 1`` gives ``Y_i = 1 / E_i``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    a = model.alpha
    if a < MIN_SAMPLER_ALPHA:
        raise ValueError(f"alpha below {MIN_SAMPLER_ALPHA} is outside the sampler's range")
    gen = rng.generator
    if a == 1.0:
        e = np.maximum(gen.standard_exponential((n, model.m)), EXP_FLOOR)
        return BlockMaximaSample(1.0 / e)
    log_t = _log_positive_stable(a, gen, n)
    e = np.maximum(gen.standard_exponential((n, model.m)), EXP_FLOOR)
    return BlockMaximaSample(np.exp(a * (log_t[:, None] - np.log(e))))


def subset_points(y, B: Subset) -> np.ndarray:
    return np.asarray(y, dtype=float)[..., list(B.indices)]
