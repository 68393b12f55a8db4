import numpy as np
import pytest
from hypothesis import strategies as st

from evdep.lattice import ExponentSet, overlap_matrix


def brute_d(values: dict, m: int) -> dict:
    """Moebius transform by direct enumeration over (L, B) pairs, no matrices."""
    full = (1 << m) - 1
    out = {}
    for L in range(1, full + 1):
        comp = full & ~L
        total = 0.0
        for B in range(1, full + 1):
            if B & comp == comp:
                total += (-1) ** (bin(B & L).count("1") + 1) * values[B]
        out[L] = total
    return out


def consistent_set_from_d(d: np.ndarray) -> ExponentSet:
    """Complete consistent set built from nonnegative d_L; margins fix y."""
    m = int(np.log2(len(d) + 1))
    V = overlap_matrix(m) @ d
    y = 1.0 / V[[(1 << i) - 1 for i in range(m)]]
    return ExponentSet(y, V)


@st.composite
def consistent_sets(draw, dims=(2, 3, 4)):
    m = draw(st.sampled_from(dims))
    k = (1 << m) - 1
    d = draw(st.lists(st.one_of(st.just(0.0), st.floats(1e-3, 10.0)), min_size=k, max_size=k))
    d = np.array(d)
    # every margin needs some mass
    for i in range(m):
        if sum(d[L - 1] for L in range(1, k + 1) if L >> i & 1) == 0:
            d[(1 << i) - 1] = 1.0
    return consistent_set_from_d(d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
