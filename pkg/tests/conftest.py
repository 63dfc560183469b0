import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from slopelab.convex_core import ConvexFunction, max_affine, quadratic


def random_mixed(rng, n, m=4, B=3.0, rank=None, kink_at=None, ties=0):
    """Quadratic (possibly rank deficient) plus max-affine with coercive box pieces.

    With ``kink_at`` and ``ties`` the first ``ties`` pieces are made exactly
    active together at that point.
    """
    rank = int(rng.integers(0, n + 1)) if rank is None else rank
    M = rng.normal(size=(n, rank))
    A = M @ M.T / max(rank, 1)
    S = rng.normal(size=(m, n))
    b = rng.normal(size=m)
    if kink_at is not None and ties:
        level = float(np.max(S @ kink_at + b)) + 1.0
        b[:ties] = level - S[:ties] @ kink_at
    eye = np.eye(n)
    S = np.vstack([S, B * eye, -B * eye])
    b = np.concatenate([b, np.full(2 * n, -B * B)])
    return ConvexFunction(A, rng.normal(size=n), S, b, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def abs1():
    return max_affine([[1.0], [-1.0]], [0.0, 0.0])


@pytest.fixture
def hinge1():
    # max(x - 1, -x - 1, 0): flat bottom on [-1, 1]
    return max_affine([[1.0], [-1.0], [0.0]], [-1.0, -1.0, 0.0])


@pytest.fixture
def half_sq2():
    return quadratic(np.eye(2))


_ACCEPTANCE = {}


@pytest.fixture
def acceptance_log():
    """Record ``(passed, detail)`` per acceptance criterion for the summary."""

    def log(number, name, passed, detail=""):
        _ACCEPTANCE[number] = (name, bool(passed), detail)
        return bool(passed)

    return log


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        name, ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
