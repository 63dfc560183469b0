"""Representable convex functions on R^n.

The class covered here is

    f(x) = 1/2 (x - c)' A (x - c) + max_i (a_i' x + b_i) + d

with ``A`` symmetric positive semidefinite and a possibly empty list of affine
pieces (an empty max contributes 0).  The class is closed under the
combinators below and every quantity we need -- subdifferential, slope,
proximal map, minimal value, argmin set and projection onto it -- is computed
to solver precision, never by finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .minnorm_qp import (
    InfeasibleError,
    Polytope,
    QpProblem,
    UnboundedError,
    min_norm_point,
    solve_lp,
    solve_qp,
)

__all__ = [
    "ConvexFunction",
    "ArgminDescription",
    "SubdifferentialPolytope",
    "ArgminUnboundedError",
    "quadratic",
    "max_affine",
    "evaluate",
    "subdifferential",
    "min_norm_subgradient",
    "slope",
    "argmin",
    "project_argmin",
    "dist_to_argmin",
    "prox",
    "prox_residual",
    "add_constant",
    "scale",
    "add_affine",
    "translate",
    "combine",
    "perturb_toward",
    "to_json",
    "from_json",
    "check_convexity",
]


class ArgminUnboundedError(UnboundedError):
    """The function is unbounded below, so it has no argmin set."""


@dataclass(frozen=True, eq=False)
class ConvexFunction:
    """Quadratic part plus max-of-affine part plus a constant.

    Parameters
    ----------
    quad_matrix : (n, n) array_like
        Symmetric positive semidefinite ``A``; may be zero.
    quad_center : (n,) array_like
        Center ``c`` of the quadratic part.
    affine_slopes : (m, n) array_like
        Slopes ``a_i``; ``m`` may be zero.
    affine_offsets : (m,) array_like
    constant : float
    """

    quad_matrix: np.ndarray
    quad_center: np.ndarray
    affine_slopes: np.ndarray
    affine_offsets: np.ndarray
    constant: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.quad_matrix, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"quad_matrix must be square, got shape {A.shape}")
        c = np.asarray(self.quad_center, dtype=float).reshape(-1)
        if c.shape != (n,):
            raise ValueError(f"quad_center has dimension {c.shape[0]}, expected {n}")
        S = np.asarray(self.affine_slopes, dtype=float)
        if S.size == 0:
            S = np.zeros((0, n))
        S = np.atleast_2d(S)
        if S.shape[1] != n:
            raise ValueError(f"affine slopes have dimension {S.shape[1]}, expected {n}")
        b = np.asarray(self.affine_offsets, dtype=float).reshape(-1)
        if b.shape[0] != S.shape[0]:
            raise ValueError("affine_slopes and affine_offsets differ in length")
        scale_A = max(1.0, float(np.abs(A).max(initial=0.0)))
        if np.abs(A - A.T).max(initial=0.0) > 1e-12 * scale_A:
            raise ValueError("quad_matrix is not symmetric")
        if not np.array_equal(A, A.T):
            A = 0.5 * (A + A.T)
        if n and np.linalg.eigvalsh(A).min() < -1e-10 * scale_A:
            raise ValueError("quad_matrix has a negative eigenvalue")
        for arr in (A, c, S, b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("function data must be finite")
        object.__setattr__(self, "quad_matrix", A)
        object.__setattr__(self, "quad_center", c)
        object.__setattr__(self, "affine_slopes", S)
        object.__setattr__(self, "affine_offsets", b)
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def n(self) -> int:
        return self.quad_center.shape[0]

    @property
    def m(self) -> int:
        return self.affine_slopes.shape[0]

    @property
    def has_quadratic(self) -> bool:
        return bool(np.any(self.quad_matrix != 0.0))

    @property
    def is_pure_quadratic(self) -> bool:
        return self.m == 0

    def __call__(self, x) -> float | np.ndarray:
        return evaluate(self, x)

    def __repr__(self) -> str:
        return f"ConvexFunction(n={self.n}, m={self.m}, quadratic={self.has_quadratic})"


def quadratic(A, center=None, constant: float = 0.0) -> ConvexFunction:
    """``1/2 (x - center)' A (x - center) + constant``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    center = np.zeros(n) if center is None else center
    return ConvexFunction(A, center, np.zeros((0, n)), np.zeros(0), constant)


def max_affine(slopes, offsets, constant: float = 0.0) -> ConvexFunction:
    """``max_i (a_i' x + b_i) + constant``."""
    S = np.atleast_2d(np.asarray(slopes, dtype=float))
    n = S.shape[1]
    return ConvexFunction(np.zeros((n, n)), np.zeros(n), S, offsets, constant)


def _as_points(f: ConvexFunction, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = np.atleast_2d(x.reshape(-1) if x.ndim == 0 else x)
    if X.shape[-1] != f.n:
        raise ValueError(f"point has dimension {X.shape[-1]}, function has dimension {f.n}")
    return X, single


def _quad_and_pieces(f: ConvexFunction, X: np.ndarray):
    D = X - f.quad_center
    q = 0.5 * np.einsum("ki,ij,kj->k", D, f.quad_matrix, D)
    pieces = X @ f.affine_slopes.T + f.affine_offsets if f.m else None
    return q, pieces


def evaluate(f: ConvexFunction, x) -> float | np.ndarray:
    """Value of ``f`` at a point, or at each row of a ``(k, n)`` array."""
    X, single = _as_points(f, x)
    q, pieces = _quad_and_pieces(f, X)
    val = q + f.constant
    if pieces is not None:
        val = val + pieces.max(axis=1)
    return float(val[0]) if single else val


@dataclass(frozen=True, eq=False)
class SubdifferentialPolytope:
    """``base + conv(generators)``; just ``{base}`` when there are no generators."""

    base: np.ndarray
    generators: np.ndarray
    active: tuple = ()

    def polytope(self) -> Polytope:
        gens = self.generators if self.generators.shape[0] else np.zeros((1, self.base.shape[0]))
        return Polytope(gens, translation=self.base)

    def min_norm_element(self, tol: float = 1e-12) -> np.ndarray:
        return min_norm_point(self.polytope(), tol=tol)[0]


def subdifferential(
    f: ConvexFunction, x, eps_active: Optional[float] = None, tol: Tolerances = DEFAULT_TOLERANCES
) -> SubdifferentialPolytope:
    """Subdifferential of ``f`` at ``x`` as a translated polytope.

    Pieces within ``eps_active`` of the maximum count as active; the default is
    ``tol.eps_active_rel * (1 + |max value|)``.
    """
    X, _ = _as_points(f, x)
    xv = X[0]
    base = f.quad_matrix @ (xv - f.quad_center)
    if f.m == 0:
        return SubdifferentialPolytope(base, np.zeros((0, f.n)))
    vals = f.affine_slopes @ xv + f.affine_offsets
    top = float(vals.max())
    if eps_active is None:
        eps_active = tol.eps_active(top)
    if eps_active < 0:
        raise ValueError("eps_active must be nonnegative")
    idx = np.flatnonzero(vals >= top - eps_active)
    gens = f.affine_slopes[idx]
    if idx.size > 1:
        # drop repeated slopes, keeping the lowest index of each
        same = np.all(gens[:, None, :] == gens[None, :, :], axis=2)
        keep = ~np.any(np.tril(same, -1), axis=1)
        gens, idx = gens[keep], idx[keep]
    return SubdifferentialPolytope(base, gens, tuple(int(i) for i in idx))


def min_norm_subgradient(f: ConvexFunction, x, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """The element of minimal norm in the subdifferential at ``x``."""
    sd = subdifferential(f, x, tol=tol)
    if sd.generators.shape[0] <= 1:
        return sd.base + (sd.generators[0] if sd.generators.shape[0] else 0.0)
    return sd.min_norm_element(tol=tol.tol_wolfe)


def slope(f: ConvexFunction, x, tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Distance from the origin to the subdifferential of ``f`` at ``x``."""
    return float(np.linalg.norm(min_norm_subgradient(f, x, tol=tol)))


# ---------------------------------------------------------------------------
# Argmin machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ArgminDescription:
    """Minimal value, a minimizer and a linear description of the argmin set.

    The set is ``{y : G y <= h, E y = e}`` where the inequalities bound every
    affine piece by its common value on the argmin set and the equalities fix
    the component of ``y`` in the range of ``A`` (the gradient of a convex
    quadratic is constant on the minimizers of ``quadratic + convex``).
    """

    min_value: float
    witness: np.ndarray
    G: np.ndarray
    h: np.ndarray
    E: np.ndarray
    e: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.witness.shape[0]

    def contains(self, y, tol: float = 1e-8) -> bool:
        y = np.asarray(y, dtype=float)
        ok_in = self.G.shape[0] == 0 or np.all(self.G @ y <= self.h + tol)
        ok_eq = self.E.shape[0] == 0 or np.all(np.abs(self.E @ y - self.e) <= tol)
        return bool(ok_in and ok_eq)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate-wise bounds of the set (``+-inf`` where unbounded)."""
        if "box" not in self._cache:
            lo = np.empty(self.n)
            hi = np.empty(self.n)
            if self.kind == "singleton":
                lo[:] = hi[:] = self.witness
            else:
                for i in range(self.n):
                    for sign, out in ((1.0, lo), (-1.0, hi)):
                        c = np.zeros(self.n)
                        c[i] = sign
                        try:
                            out[i] = solve_lp(c, self.G, self.h, self.E, self.e)[i]
                        except UnboundedError:
                            out[i] = -sign * np.inf
            self._cache["box"] = (lo, hi)
        return self._cache["box"]

    @property
    def bounded(self) -> bool:
        lo, hi = self.bounding_box()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    @property
    def kind(self) -> str:
        """``'singleton'``, ``'affine'`` (equalities only) or ``'polyhedron'``."""
        if "kind" not in self._cache:
            if self.E.shape[0] == self.n:
                kind = "singleton"
            elif self.G.shape[0] == 0:
                kind = "affine"
            else:
                kind = "singleton" if _polyhedron_is_point(self) else "polyhedron"
            self._cache["kind"] = kind
        return self._cache["kind"]


def _polyhedron_is_point(desc: ArgminDescription, tol: float = 1e-7) -> bool:
    # the set is {witness} iff every coordinate LP returns the witness
    for i in range(desc.n):
        for sign in (1.0, -1.0):
            c = np.zeros(desc.n)
            c[i] = sign
            try:
                y = solve_lp(c, desc.G, desc.h, desc.E, desc.e)
            except UnboundedError:
                return False
            if abs(y[i] - desc.witness[i]) > tol * (1.0 + abs(desc.witness[i])):
                return False
    return True


def _range_basis(A: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the range of a PSD matrix."""
    w, V = np.linalg.eigh(A)
    keep = w > 1e-10 * max(1.0, float(np.abs(w).max(initial=0.0)))
    return V[:, keep].T


def _epigraph_constraints(f: ConvexFunction):
    G = np.hstack([f.affine_slopes, -np.ones((f.m, 1))])
    return G, -f.affine_offsets


def argmin(f: ConvexFunction, tol: Tolerances = DEFAULT_TOLERANCES) -> ArgminDescription:
    """Minimal value and argmin set of ``f`` (cached on the function).

    Raises
    ------
    ArgminUnboundedError
        If ``f`` is unbounded below.
    """
    key = ("argmin", tol)
    if key in f._cache:
        return f._cache[key]
    n = f.n
    A, c = f.quad_matrix, f.quad_center
    if f.m == 0:
        witness = c.copy()
    else:
        G, h = _epigraph_constraints(f)
        P = np.zeros((n + 1, n + 1))
        P[:n, :n] = A
        q = np.concatenate([-A @ c, [1.0]])
        y0 = c.copy()
        vals = f.affine_slopes @ y0 + f.affine_offsets
        z0 = np.concatenate([y0, [vals.max()]])
        try:
            sol = solve_qp(
                QpProblem(P, q, G, h), x0=z0, working_set=[int(np.argmax(vals))], tol=tol.tol_qp
            )
        except UnboundedError as exc:
            raise ArgminUnboundedError("function is unbounded below", **exc.diagnostics) from None
        witness = sol.x[:n]
    fstar = float(evaluate(f, witness))
    R = _range_basis(A)
    E = R
    e = R @ witness
    if f.m:
        qstar = 0.5 * (witness - c) @ A @ (witness - c)
        level = fstar - f.constant - qstar
        Gy = f.affine_slopes
        hy = level - f.affine_offsets
    else:
        Gy, hy = np.zeros((0, n)), np.zeros(0)
    desc = ArgminDescription(fstar, witness, Gy, hy, E, e)
    f._cache[key] = desc
    return desc


def project_argmin(
    f: ConvexFunction, x, tol: Tolerances = DEFAULT_TOLERANCES
) -> tuple[np.ndarray, float]:
    """Projection of ``x`` onto the argmin set and the distance to it."""
    desc = argmin(f, tol=tol)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != f.n:
        raise ValueError("dimension mismatch")
    if desc.kind == "singleton":
        y = desc.witness.copy()
    elif desc.kind == "affine":
        R = desc.E
        y = x - R.T @ (R @ (x - desc.witness))
    else:
        if desc.contains(x, tol=0.0):
            y = x.copy()
        else:
            n = f.n
            try:
                y = solve_qp(
                    QpProblem(np.eye(n), -x, desc.G, desc.h, desc.E, desc.e),
                    x0=desc.witness,
                    tol=tol.tol_qp,
                ).x
            except InfeasibleError as exc:
                raise RuntimeError("argmin constraint system infeasible; argmin bug") from exc
    return y, float(np.linalg.norm(x - y))


def dist_to_argmin(f: ConvexFunction, X, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Distances of each row of ``X`` to the argmin set (vectorised where possible)."""
    X, single = _as_points(f, X)
    desc = argmin(f, tol=tol)
    if desc.kind == "singleton":
        d = np.linalg.norm(X - desc.witness, axis=1)
    elif desc.kind == "affine":
        d = np.linalg.norm((X - desc.witness) @ desc.E.T, axis=1)
    else:
        d = np.array([project_argmin(f, x, tol=tol)[1] for x in X])
    return float(d[0]) if single else d


# ---------------------------------------------------------------------------
# Proximal map
# ---------------------------------------------------------------------------


def prox(
    f: ConvexFunction, step: float, x, tol: Tolerances = DEFAULT_TOLERANCES
) -> np.ndarray:
    """Unique minimizer of ``f(y) + |y - x|^2 / (2 step)``.

    With affine pieces the QP is solved for the scaled displacement
    ``u = (y - x) / step``, whose size is that of a subgradient whatever the
    step; in ``y`` itself tiny steps would fall below the solver tolerance.
    """
    if not step > 0:
        raise ValueError("prox step must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != f.n:
        raise ValueError("dimension mismatch")
    n = f.n
    A, c = f.quad_matrix, f.quad_center
    if f.m == 0:
        return np.linalg.solve(A + np.eye(n) / step, A @ c + x / step)
    # min 1/2 u'(I + step A)u + grad_q(x)'u + t  s.t.  a_i'u - t <= (top - v_i) / step
    vals = f.affine_slopes @ x + f.affine_offsets
    top = vals.max()
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = np.eye(n) + step * A
    q = np.concatenate([A @ (x - c), [1.0]])
    G = np.hstack([f.affine_slopes, -np.ones((f.m, 1))])
    h = (top - vals) / step
    ws = np.flatnonzero(vals >= top - tol.eps_active(top))
    z0 = np.zeros(n + 1)
    sol = solve_qp(QpProblem(P, q, G, h), x0=z0, working_set=ws, tol=tol.tol_qp)
    return x + step * sol.x[:n]


def prox_residual(
    f: ConvexFunction, step: float, x, y, tol: Tolerances = DEFAULT_TOLERANCES
) -> float:
    """``dist((x - y)/step, subdifferential of f at y)``: zero at the exact prox point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = (x - y) / step
    sd = subdifferential(f, y, tol=tol)
    shifted = SubdifferentialPolytope(sd.base - v, sd.generators)
    return float(np.linalg.norm(shifted.min_norm_element(tol=tol.tol_wolfe)))


# ---------------------------------------------------------------------------
# Combinators
# ---------------------------------------------------------------------------


def add_constant(f: ConvexFunction, c: float) -> ConvexFunction:
    return ConvexFunction(
        f.quad_matrix, f.quad_center, f.affine_slopes, f.affine_offsets, f.constant + c
    )


def scale(f: ConvexFunction, lam: float) -> ConvexFunction:
    """``lam * f`` for ``lam > 0``."""
    if not lam > 0:
        raise ValueError("scale factor must be positive")
    return ConvexFunction(
        lam * f.quad_matrix,
        f.quad_center,
        lam * f.affine_slopes,
        lam * f.affine_offsets,
        lam * f.constant,
    )


def add_affine(f: ConvexFunction, a, b: float = 0.0) -> ConvexFunction:
    """``f(x) + a'x + b``; the linear term is folded into every affine piece."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape[0] != f.n:
        raise ValueError("dimension mismatch")
    if f.m:
        slopes, offsets = f.affine_slopes + a, f.affine_offsets
    else:
        slopes, offsets = a.reshape(1, -1), np.zeros(1)
    return ConvexFunction(f.quad_matrix, f.quad_center, slopes, offsets, f.constant + b)


def translate(f: ConvexFunction, t) -> ConvexFunction:
    """The function ``x -> f(x - t)``."""
    t = np.asarray(t, dtype=float).reshape(-1)
    return ConvexFunction(
        f.quad_matrix,
        f.quad_center + t,
        f.affine_slopes,
        f.affine_offsets - f.affine_slopes @ t,
        f.constant,
    )


def combine(f: ConvexFunction, g: ConvexFunction, alpha: float, beta: float) -> ConvexFunction:
    """``alpha f + beta g`` for nonnegative weights.

    The sum of two max-affine parts is the max over all pairs of pieces.  The
    quadratic parts are merged and re-centred; any linear remainder that is
    not in the range of the merged matrix goes into the affine pieces.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("weights must be nonnegative")
    if f.n != g.n:
        raise ValueError("dimension mismatch")
    n = f.n
    A = alpha * f.quad_matrix + beta * g.quad_matrix
    lin = -(alpha * f.quad_matrix @ f.quad_center + beta * g.quad_matrix @ g.quad_center)
    const = (
        0.5 * alpha * f.quad_center @ f.quad_matrix @ f.quad_center
        + 0.5 * beta * g.quad_center @ g.quad_matrix @ g.quad_center
        + alpha * f.constant
        + beta * g.constant
    )
    if f.m and g.m:
        slopes = (alpha * f.affine_slopes[:, None, :] + beta * g.affine_slopes[None, :, :]).reshape(-1, n)
        offsets = (alpha * f.affine_offsets[:, None] + beta * g.affine_offsets[None, :]).reshape(-1)
    elif f.m:
        slopes, offsets = alpha * f.affine_slopes, alpha * f.affine_offsets
    elif g.m:
        slopes, offsets = beta * g.affine_slopes, beta * g.affine_offsets
    else:
        slopes, offsets = np.zeros((0, n)), np.zeros(0)
    # 1/2 x'Ax + lin'x = 1/2 (x-c)'A(x-c) + (lin + Ac)'x - 1/2 c'Ac
    center, *_ = np.linalg.lstsq(A, -lin, rcond=None) if n else (np.zeros(0),)
    rem = lin + A @ center
    const -= 0.5 * center @ A @ center
    if np.linalg.norm(rem) > 1e-14 * (1.0 + np.linalg.norm(lin)):
        if slopes.shape[0]:
            slopes = slopes + rem
        else:
            slopes, offsets = rem.reshape(1, -1), np.zeros(1)
    return ConvexFunction(A, center, slopes, offsets, const)


def perturb_toward(f: ConvexFunction, g: ConvexFunction, eps: float) -> ConvexFunction:
    """Convex combination ``(1 - eps) f + eps g`` for ``eps`` in ``[0, 1]``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    return combine(f, g, 1.0 - eps, eps)


# ---------------------------------------------------------------------------
# Serialisation and checks
# ---------------------------------------------------------------------------


def to_dict(f: ConvexFunction) -> dict:
    return {
        "n": f.n,
        "quad_matrix": f.quad_matrix.tolist(),
        "quad_center": f.quad_center.tolist(),
        "affine_slopes": f.affine_slopes.tolist(),
        "affine_offsets": f.affine_offsets.tolist(),
        "constant": f.constant,
    }


def from_dict(d: dict) -> ConvexFunction:
    """Inverse of :func:`to_dict`.

    ``n`` may be omitted when a quadratic matrix or affine slopes fix it; the
    quadratic part and the constant default to zero.
    """
    if "n" in d:
        n = int(d["n"])
    elif "quad_matrix" in d:
        n = len(d["quad_matrix"])
    elif d.get("affine_slopes"):
        n = len(d["affine_slopes"][0])
    else:
        raise ValueError("cannot infer the dimension: give n, quad_matrix or affine_slopes")
    slopes = np.asarray(d.get("affine_slopes", []), dtype=float).reshape(-1, n)
    return ConvexFunction(
        np.asarray(d.get("quad_matrix", np.zeros((n, n))), dtype=float).reshape(n, n),
        np.asarray(d.get("quad_center", np.zeros(n)), dtype=float).reshape(n),
        slopes,
        np.asarray(d.get("affine_offsets", []), dtype=float),
        float(d.get("constant", 0.0)),
    )


def to_json(f: ConvexFunction) -> str:
    return json.dumps(to_dict(f))


def from_json(s: str) -> ConvexFunction:
    return from_dict(json.loads(s))


def check_convexity(f: ConvexFunction, rng: np.random.Generator, samples: int = 200, box: float = 5.0) -> float:
    """Largest midpoint-convexity violation over random pairs in ``[-box, box]^n``.

    Returns the worst value of ``f((x+y)/2) - (f(x)+f(y))/2`` divided by the
    sample scale; anything above ``1e-9`` indicates a broken function.
    """
    X = rng.uniform(-box, box, size=(samples, f.n))
    Y = rng.uniform(-box, box, size=(samples, f.n))
    fx, fy, fm = evaluate(f, X), evaluate(f, Y), evaluate(f, 0.5 * (X + Y))
    scale = 1.0 + np.maximum(np.abs(fx), np.abs(fy))
    return float(np.max((fm - 0.5 * (fx + fy)) / scale))
