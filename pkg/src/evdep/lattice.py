"""Subset-lattice algebra for complete sets of exponent measures.

Subsets of the ground set {1, ..., m} are bitmasks; bit ``i - 1`` marks
member ``i``.  Every per-subset quantity is stored in a dense array at
position ``bits - 1`` so that the canonical order is increasing bitmask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

MAX_DIM = 16
DEFAULT_TOL = 1e-9


class IncompleteSetError(ValueError):
    """Raised when a per-subset collection does not cover all 2^m - 1 subsets."""


@dataclass(frozen=True, order=True)
class Subset:
    """A nonempty subset of {1, ..., m} encoded as a bitmask."""

    bits: int
    m: int

    def __post_init__(self):
        if not 1 <= self.m <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {self.m}")
        if self.bits <= 0:
            raise ValueError("subset must be nonempty")
        if self.bits >> self.m:
            raise ValueError(f"bitmask {self.bits:#b} has members above m={self.m}")

    @classmethod
    def of(cls, members: Iterable[int], m: int) -> "Subset":
        bits = 0
        for i in members:
            if not 1 <= i <= m:
                raise ValueError(f"member {i} outside 1..{m}")
            bits |= 1 << (i - 1)
        return cls(bits, m)

    @classmethod
    def parse(cls, label: str, m: int) -> "Subset":
        """Inverse of :attr:`label`, e.g. ``"1+3"``."""
        return cls.of((int(tok) for tok in label.split("+")), m)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in range(self.m) if self.bits >> i & 1)

    @property
    def indices(self) -> tuple[int, ...]:
        """Zero-based coordinates, for indexing arrays."""
        return tuple(i for i in range(self.m) if self.bits >> i & 1)

    @property
    def size(self) -> int:
        return _popcount(self.bits)

    @property
    def label(self) -> str:
        return "+".join(str(i) for i in self.members)

    @property
    def position(self) -> int:
        """Index into dense per-subset arrays."""
        return self.bits - 1

    def __repr__(self):
        return "{" + ",".join(str(i) for i in self.members) + "}"


SubsetKey = Union[Subset, int, str, Sequence[int]]


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _check_dim(m: int) -> None:
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= MAX_DIM:
        raise ValueError(f"dimension must be an integer in [1, {MAX_DIM}], got {m!r}")


def enumerate_subsets(m: int) -> list[Subset]:
    """All nonempty subsets of {1..m} in increasing bitmask order."""
    _check_dim(m)
    return [Subset(b, m) for b in range(1, 1 << m)]


def as_subset(key: SubsetKey, m: int) -> Subset:
    if isinstance(key, Subset):
        if key.m != m:
            raise ValueError(f"subset {key} belongs to dimension {key.m}, not {m}")
        return key
    if isinstance(key, (int, np.integer)):
        return Subset(int(key), m)
    if isinstance(key, str):
        return Subset.parse(key, m)
    return Subset.of(key, m)


def moebius_coefficients(L: Subset, m: int | None = None) -> dict[Subset, int]:
    """Signed coefficients turning exponent measures into ``d_L``.

    The keys are the subsets ``B`` containing the complement of ``L`` and
    the sign for ``B`` is ``(-1) ** (|B & L| + 1)``.
    """
    m = L.m if m is None else m
    L = as_subset(L, m)
    full = (1 << m) - 1
    comp = full & ~L.bits
    out = {}
    # supersets of comp are comp | s for s ranging over the subsets of L
    s = L.bits
    while True:
        b = comp | s
        if b:
            out[Subset(b, m)] = -1 if _popcount(b & L.bits) % 2 == 0 else 1
        if s == 0:
            break
        s = (s - 1) & L.bits
    return dict(sorted(out.items()))


@lru_cache(maxsize=None)
def _moebius_matrix(m: int) -> np.ndarray:
    k = (1 << m) - 1
    full = k
    M = np.zeros((k, k))
    for L in range(1, k + 1):
        comp = full & ~L
        for B in range(1, k + 1):
            if B & comp == comp:
                M[L - 1, B - 1] = -1.0 if _popcount(B & L) % 2 == 0 else 1.0
    M.setflags(write=False)
    return M


def moebius_matrix(m: int) -> np.ndarray:
    """Dense (2^m-1) x (2^m-1) matrix with ``d = M @ V``; rows L, columns B."""
    _check_dim(m)
    return _moebius_matrix(m)


@lru_cache(maxsize=None)
def _overlap_matrix(m: int) -> np.ndarray:
    k = (1 << m) - 1
    idx = np.arange(1, k + 1)
    R = ((idx[:, None] & idx[None, :]) != 0).astype(float)
    R.setflags(write=False)
    return R


def overlap_matrix(m: int) -> np.ndarray:
    """Matrix with ``V = R @ d``; entry (B, L) is 1 when B and L intersect."""
    _check_dim(m)
    return _overlap_matrix(m)


def _as_values(values, m: int) -> np.ndarray:
    k = (1 << m) - 1
    if isinstance(values, Mapping):
        arr = np.full(k, np.nan)
        for key, v in values.items():
            arr[as_subset(key, m).position] = float(v)
    else:
        arr = np.asarray(values, dtype=float).copy()
        if arr.shape != (k,):
            raise IncompleteSetError(f"expected {k} values for m={m}, got shape {arr.shape}")
    if np.isnan(arr).any():
        missing = [repr(Subset(i + 1, m)) for i in np.flatnonzero(np.isnan(arr))]
        raise IncompleteSetError(f"missing values for subsets {', '.join(missing)}")
    arr.setflags(write=False)
    return arr


class _PerSubset:
    m: int
    _arr: np.ndarray

    def __getitem__(self, key: SubsetKey) -> float:
        return float(self._arr[as_subset(key, self.m).position])

    def as_dict(self) -> dict[Subset, float]:
        return {S: float(self._arr[S.position]) for S in enumerate_subsets(self.m)}

    def __len__(self):
        return len(self._arr)


@dataclass(frozen=True, eq=False)
class ExponentSet(_PerSubset):
    """A complete set of exponent-measure values ``V_B(y_B)`` at one point ``y``.

    ``values`` may be a mapping keyed by anything :func:`as_subset` accepts,
    or a dense array in bitmask order.  Singleton entries must equal
    ``1 / y_i`` (unit Frechet margins).
    """

    y: np.ndarray
    values: np.ndarray
    m: int = field(init=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).copy()
        if y.ndim != 1:
            raise ValueError("y must be a vector")
        _check_dim(len(y))
        if not np.all(y > 0) or not np.all(np.isfinite(y)):
            raise ValueError("y must be strictly positive and finite")
        y.setflags(write=False)
        m = len(y)
        arr = _as_values(self.values, m)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("exponent measures must be finite and nonnegative")
        singles = arr[[(1 << i) - 1 for i in range(m)]]
        if not np.allclose(singles, 1.0 / y, rtol=1e-9, atol=0.0):
            raise ValueError("singleton exponent measures must equal 1/y_i")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "_arr", arr)

    def within_margin_bounds(self, rtol: float = 1e-12) -> bool:
        """Whether max_i 1/y_i <= V_B <= sum_i 1/y_i for every B."""
        inv = 1.0 / self.y
        for S in enumerate_subsets(self.m):
            part = inv[list(S.indices)]
            v = self.values[S.position]
            if v < part.max() * (1 - rtol) or v > part.sum() * (1 + rtol):
                return False
        return True


@dataclass(frozen=True, eq=False)
class MoebiusDecomposition(_PerSubset):
    """The values ``d_L(y)`` for every nonempty L at one point."""

    y: np.ndarray
    d: np.ndarray
    m: int = field(init=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).copy()
        y.setflags(write=False)
        m = len(y)
        _check_dim(m)
        arr = _as_values(self.d, m)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", arr)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "_arr", arr)


@dataclass(frozen=True, eq=False)
class ExtremalCoefficients(_PerSubset):
    theta: np.ndarray
    m: int

    def __post_init__(self):
        arr = _as_values(self.theta, self.m)
        sizes = np.array([_popcount(b) for b in range(1, 1 << self.m)])
        if np.any(arr < 1 - 1e-12) or np.any(arr > sizes + 1e-12):
            raise ValueError("extremal coefficients must satisfy 1 <= theta_B <= |B|")
        object.__setattr__(self, "theta", arr)
        object.__setattr__(self, "_arr", arr)


@dataclass(frozen=True)
class ConsistencyReport:
    consistent: bool
    violations: list  # (Subset, d_L) pairs, most negative first
    decomposition: MoebiusDecomposition


def d_values(V: ExponentSet) -> MoebiusDecomposition:
    """Moebius transform of a complete exponent-measure set."""
    return MoebiusDecomposition(V.y, moebius_matrix(V.m) @ V.values)


def check_consistency(V: ExponentSet, tol: float = DEFAULT_TOL) -> ConsistencyReport:
    """Test whether ``V`` can come from one max-stable law: all ``d_L >= -tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    dec = d_values(V)
    bad = np.flatnonzero(dec.d < -tol)
    bad = bad[np.argsort(dec.d[bad], kind="stable")]
    violations = [(Subset(int(i) + 1, V.m), float(dec.d[i])) for i in bad]
    return ConsistencyReport(not violations, violations, dec)


def reconstruct_V(d: MoebiusDecomposition, B: SubsetKey) -> float:
    """Sum of ``d_L`` over every L that meets ``B``."""
    S = as_subset(B, d.m)
    row = overlap_matrix(d.m)[S.position]
    return float(row @ d.d)


def extremal_coefficients_from_V(V: ExponentSet) -> ExtremalCoefficients:
    if not np.all(V.y == 1.0):
        raise ValueError("extremal coefficients need the exponent measures at y = (1, ..., 1)")
    return ExtremalCoefficients(V.values, V.m)


def theta_bounds_m3(theta12: float, theta13: float, theta23: float) -> tuple[float, float]:
    """Interval for theta_123 implied by the three pairwise coefficients."""
    for t in (theta12, theta13, theta23):
        if not 1.0 <= t <= 2.0:
            raise ValueError(f"pairwise extremal coefficient {t} outside [1, 2]")
    lo = max(theta12, theta13, theta23, theta12 + theta13 + theta23 - 3.0)
    hi = min(theta12 + theta13 - 1.0, theta12 + theta23 - 1.0, theta13 + theta23 - 1.0)
    return lo, hi
