"""Small dense convex subproblems.

Two engines live here:

* :func:`min_norm_point` -- Wolfe's algorithm for the point of minimal norm in
  ``translation + conv(generators)``.  This is what turns a subdifferential
  polytope into a slope.
* :func:`solve_qp` -- a primal active-set method for
  ``min 1/2 x'Px + q'x  s.t.  Gx <= h, Ex = e`` with ``P`` positive
  *semi*-definite.  Zero-curvature directions are followed to the next
  blocking constraint, so LPs and epigraph reformulations are handled by the
  same loop.  Proximal maps, argmin computations and projections are all built
  on it.

Sizes are desk scale (a few dozen variables and constraints); everything is
dense numpy.  Ties between equally good indices are always broken towards the
lowest index so that runs are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "SolverError",
    "NonConvergenceError",
    "InfeasibleError",
    "UnboundedError",
    "Polytope",
    "QpProblem",
    "QpSolution",
    "min_norm_point",
    "min_norm_weights",
    "solve_qp",
    "kkt_residuals",
    "project_polyhedron",
    "find_feasible_point",
    "solve_lp",
]


class SolverError(RuntimeError):
    """Base class for solver failures; carries a JSON-serialisable diagnostic dump."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def to_json(self) -> str:
        def convert(obj):
            if isinstance(obj, np.ndarray):
                return obj.tolist()
            if isinstance(obj, (np.floating, np.integer)):
                return obj.item()
            raise TypeError(type(obj).__name__)

        payload = {"error": type(self).__name__, "message": str(self)}
        payload.update(self.diagnostics)
        return json.dumps(payload, default=convert, sort_keys=True)


class NonConvergenceError(SolverError):
    """Iteration cap exceeded.  ``diagnostics`` holds the best iterate and its residual."""


class InfeasibleError(SolverError):
    """The constraint system admits no point."""


class UnboundedError(SolverError):
    """The objective decreases without bound on the feasible set."""


def _iteration_cap(m: int, n: int) -> int:
    return 10 * (m + n) ** 2


# ---------------------------------------------------------------------------
# Minimal-norm point of a polytope
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Polytope:
    """Vertex description ``translation + conv(generators)``.

    ``generators`` is an ``(m, n)`` array with ``m >= 1``.
    """

    generators: np.ndarray
    translation: Optional[np.ndarray] = None

    def __post_init__(self):
        gens = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if gens.shape[0] < 1 or gens.size == 0:
            raise ValueError("a polytope needs at least one generator")
        object.__setattr__(self, "generators", gens)
        if self.translation is not None:
            t = np.asarray(self.translation, dtype=float).reshape(-1)
            if t.shape[0] != gens.shape[1]:
                raise ValueError(
                    f"translation has dimension {t.shape[0]}, generators have {gens.shape[1]}"
                )
            object.__setattr__(self, "translation", t)

    @property
    def points(self) -> np.ndarray:
        if self.translation is None:
            return self.generators
        return self.generators + self.translation


def _affine_minimizer(pts: np.ndarray) -> np.ndarray:
    """Barycentric weights of the min-norm point of the affine hull of ``pts``."""
    k = pts.shape[0]
    if k == 1:
        return np.ones(1)
    base = pts[0]
    D = (pts[1:] - base).T
    mu, *_ = np.linalg.lstsq(D, -base, rcond=None)
    return np.concatenate(([1.0 - mu.sum()], mu))


def min_norm_weights(
    p: Polytope, tol: float = 1e-12, max_iter: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Wolfe's min-norm point algorithm.

    Returns
    -------
    v : ndarray
        The point of ``p`` with least Euclidean norm.
    weights : ndarray
        Convex weights over the generators with ``v = points.T @ weights``.

    Raises
    ------
    NonConvergenceError
        If ``max_iter`` (default ``10 (m + n)^2``) major+minor cycles pass.
    """
    P = p.points
    m, n = P.shape
    if max_iter is None:
        max_iter = _iteration_cap(m, n)
    sq = np.einsum("ij,ij->i", P, P)
    scale = max(1.0, float(sq.max()))

    s0 = int(np.argmin(sq))
    support = [s0]
    lam = np.ones(1)
    x = P[s0].copy()

    it = 0
    while True:
        dots = P @ x
        j = int(np.argmin(dots))
        gap = float(x @ x - dots[j])
        if gap <= tol * scale or j in support:
            break
        support.append(j)
        lam = np.append(lam, 0.0)
        # minor cycle
        while True:
            it += 1
            if it > max_iter:
                raise NonConvergenceError(
                    "min-norm point iteration cap exceeded",
                    best_iterate=x,
                    residual=gap,
                    iterations=it,
                )
            alpha = _affine_minimizer(P[support])
            if np.all(alpha > 1e-14):
                lam = alpha
                x = P[support].T @ lam
                break
            neg = alpha <= 1e-14
            denom = lam[neg] - alpha[neg]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, lam[neg] / denom, np.inf)
            theta = float(min(1.0, ratios.min()))
            lam = lam + theta * (alpha - lam)
            keep = lam > 1e-14
            if keep.all():
                # theta rounding left every weight positive; drop the smallest
                keep[int(np.argmin(lam))] = False
            support = [s for s, k in zip(support, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
            x = P[support].T @ lam

    weights = np.zeros(m)
    weights[support] = lam
    return x, weights


def min_norm_point(
    p: Polytope, tol: float = 1e-12, max_iter: Optional[int] = None
) -> tuple[np.ndarray, float]:
    """Point of minimal norm in ``p`` and its norm."""
    if p.generators.shape[0] == 1:
        v = p.points[0].copy()
        return v, float(np.linalg.norm(v))
    v, _ = min_norm_weights(p, tol=tol, max_iter=max_iter)
    return v, float(np.linalg.norm(v))


# ---------------------------------------------------------------------------
# Active-set QP
# ---------------------------------------------------------------------------


def _as_matrix(M, ncols: int) -> np.ndarray:
    if M is None:
        return np.zeros((0, ncols))
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1) if M.size else np.zeros((0, ncols))
    return M


def _as_vector(v, length: int) -> np.ndarray:
    if v is None:
        return np.zeros(length)
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class QpProblem:
    """``min 1/2 x'Px + q'x`` subject to ``Gx <= h`` and ``Ex = e``."""

    P: np.ndarray
    q: np.ndarray
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    E: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        k = P.shape[0]
        if P.shape != (k, k):
            raise ValueError("P must be square")
        if not np.allclose(P, P.T, atol=1e-10, rtol=0.0):
            raise ValueError("P must be symmetric")
        q = _as_vector(self.q, k)
        G = _as_matrix(self.G, k)
        h = _as_vector(self.h, G.shape[0])
        E = _as_matrix(self.E, k)
        e = _as_vector(self.e, E.shape[0])
        if q.shape != (k,) or G.shape[1] != k or E.shape[1] != k:
            raise ValueError("inconsistent QP dimensions")
        if h.shape[0] != G.shape[0] or e.shape[0] != E.shape[0]:
            raise ValueError("right-hand sides do not match constraint rows")
        for name, val in (("P", P), ("q", q), ("G", G), ("h", h), ("E", E), ("e", e)):
            object.__setattr__(self, name, val)

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    z: np.ndarray  # inequality multipliers
    y: np.ndarray  # equality multipliers
    active: tuple
    iterations: int = 0
    objective: float = field(default=float("nan"))


def _null_space(A: np.ndarray, n: int) -> np.ndarray:
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(A)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > max(tol, 1e-13)))
    return Vt[rank:].T


def _independent(rows: np.ndarray, candidate: np.ndarray) -> bool:
    if rows.shape[0] == 0:
        return bool(np.linalg.norm(candidate) > 1e-13)
    stacked = np.vstack([rows, candidate])
    s = np.linalg.svd(stacked, compute_uv=False)
    return bool(s[-1] > 1e-10 * max(1.0, s[0])) and stacked.shape[0] <= stacked.shape[1]


def solve_qp(
    prob: QpProblem,
    x0: Optional[np.ndarray] = None,
    working_set: Optional[Sequence[int]] = None,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
) -> QpSolution:
    """Solve a convex QP by the primal active-set method.

    Parameters
    ----------
    prob : QpProblem
    x0 : ndarray, optional
        A feasible starting point.  When omitted, one is found with a phase-1
        LP and infeasibility is reported as :class:`InfeasibleError`.
    working_set : sequence of int, optional
        Inequalities to treat as active at ``x0`` (warm start).  Rows that are
        not tight at ``x0`` or are linearly dependent are dropped.
    tol : float
        Feasibility and stationarity tolerance.

    Raises
    ------
    InfeasibleError, UnboundedError, NonConvergenceError
    """
    k = prob.dim
    P, q, G, h, E, e = prob.P, prob.q, prob.G, prob.h, prob.E, prob.e
    mi = G.shape[0]
    if max_iter is None:
        max_iter = _iteration_cap(mi + E.shape[0], k)

    if x0 is None:
        x = find_feasible_point(G, h, E, e, n=k)
    else:
        x = np.asarray(x0, dtype=float).copy()
        if mi and np.any(G @ x - h > 1e-7 * (1.0 + np.abs(h))):
            raise InfeasibleError("starting point violates inequalities", x0=x)

    # independent equality rows
    eq_rows: list[int] = []
    for i in range(E.shape[0]):
        if _independent(E[eq_rows], E[i]):
            eq_rows.append(i)
    W: list[int] = []
    if working_set is not None and mi:
        slack = h - G @ x
        for i in sorted(set(int(i) for i in working_set)):
            if abs(slack[i]) <= 1e-9 * (1.0 + abs(h[i])):
                rows = np.vstack([E[eq_rows], G[W]]) if W else E[eq_rows]
                if _independent(rows, G[i]):
                    W.append(i)

    gscale = 1.0 + float(np.abs(q).max(initial=0.0)) + float(np.abs(P).max(initial=0.0))
    zero_steps = 0
    for it in range(1, max_iter + 1):
        g = P @ x + q
        A_W = np.vstack([E[eq_rows], G[W]]) if (eq_rows or W) else np.zeros((0, k))
        Z = _null_space(A_W, k)
        p = np.zeros(k)
        ray = False
        if Z.shape[1]:
            H = Z.T @ P @ Z
            r = Z.T @ g
            w, V = np.linalg.eigh(H)
            pos = w > 1e-11 * max(1.0, float(np.abs(w).max(initial=0.0)))
            V0 = V[:, ~pos]
            r0 = V0 @ (V0.T @ r)
            if np.linalg.norm(r0) > tol * gscale:
                p = -Z @ r0
                ray = True
            else:
                Vp = V[:, pos]
                u = -Vp @ ((Vp.T @ r) / w[pos])
                p = Z @ u

        if not ray and np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(x)):
            # stationary on the working set: inspect multipliers
            if A_W.shape[0]:
                mu, *_ = np.linalg.lstsq(A_W.T, -g, rcond=None)
            else:
                mu = np.zeros(0)
            mu_I = mu[len(eq_rows):]
            if mu_I.size == 0 or mu_I.min() >= -tol * gscale:
                z = np.zeros(mi)
                z[W] = np.maximum(mu_I, 0.0)
                y = np.zeros(E.shape[0])
                y[eq_rows] = mu[: len(eq_rows)]
                return QpSolution(
                    x=x, z=z, y=y, active=tuple(sorted(W)), iterations=it,
                    objective=prob.objective(x),
                )
            if zero_steps > 2 * k:
                # Bland-style anti-cycling: lowest index with a negative multiplier
                cand = [(W[i], i) for i in range(len(W)) if mu_I[i] < -tol * gscale]
                drop = min(cand)[1]
            else:
                drop = int(np.argmin(mu_I))
            W.pop(drop)
            continue

        # ratio test
        alpha = np.inf if ray else 1.0
        block = -1
        if mi:
            Gp = G @ p
            inW = np.zeros(mi, dtype=bool)
            inW[W] = True
            cand = (~inW) & (Gp > 1e-14 * (1.0 + np.linalg.norm(p)))
            if cand.any():
                slack = np.maximum(h - G @ x, 0.0)
                ratios = np.full(mi, np.inf)
                ratios[cand] = slack[cand] / Gp[cand]
                j = int(np.argmin(ratios))
                if ratios[j] < alpha:
                    alpha = float(ratios[j])
                    block = j
        if not np.isfinite(alpha):
            raise UnboundedError(
                "objective unbounded below along a zero-curvature direction",
                x=x, direction=p,
            )
        zero_steps = zero_steps + 1 if alpha * np.linalg.norm(p) <= 1e-15 else 0
        x = x + alpha * p
        if block >= 0:
            W.append(block)

    raise NonConvergenceError(
        "active-set iteration cap exceeded", best_iterate=x, working_set=W,
        iterations=max_iter,
    )


def kkt_residuals(prob: QpProblem, sol: QpSolution) -> dict:
    """Stationarity, feasibility and complementarity residuals of a solution."""
    x, z, y = sol.x, sol.z, sol.y
    stat = prob.P @ x + prob.q + prob.G.T @ z + prob.E.T @ y
    slack = prob.h - prob.G @ x if prob.G.shape[0] else np.zeros(0)
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0)),
        "primal_ineq": float(np.maximum(-slack, 0.0).max(initial=0.0)),
        "primal_eq": float(np.abs(prob.E @ x - prob.e).max(initial=0.0)),
        "dual": float(np.maximum(-z, 0.0).max(initial=0.0)),
        "complementarity": float(np.abs(z * slack).max(initial=0.0)),
    }


def find_feasible_point(G, h, E=None, e=None, n: Optional[int] = None) -> np.ndarray:
    """A point satisfying ``Gx <= h, Ex = e`` (phase-1 LP)."""
    if n is None:
        n = np.asarray(G if G is not None else E).shape[1]
    return solve_lp(np.zeros(n), G, h, E, e)


def solve_lp(c, G=None, h=None, E=None, e=None) -> np.ndarray:
    """``min c'x  s.t.  Gx <= h, Ex = e`` over free variables (HiGHS)."""
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    G = _as_matrix(G, n)
    E = _as_matrix(E, n)
    res = linprog(
        c,
        A_ub=G if G.shape[0] else None,
        b_ub=_as_vector(h, G.shape[0]) if G.shape[0] else None,
        A_eq=E if E.shape[0] else None,
        b_eq=_as_vector(e, E.shape[0]) if E.shape[0] else None,
        bounds=[(None, None)] * n,
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleError("linear constraint system is infeasible", message_lp=res.message)
    if res.status == 3:
        raise UnboundedError("linear program is unbounded", message_lp=res.message)
    if res.status != 0:
        raise NonConvergenceError("LP solver failed", message_lp=res.message)
    return np.asarray(res.x, dtype=float)


def project_polyhedron(
    x: np.ndarray,
    G=None,
    h=None,
    E=None,
    e=None,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-10,
) -> np.ndarray:
    """Euclidean projection of ``x`` onto ``{y : Gy <= h, Ey = e}``.

    ``x0`` is an optional feasible point used to start the active-set solve.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    prob = QpProblem(P=np.eye(n), q=-x, G=G, h=h, E=E, e=e)
    feasible = (
        (prob.G.shape[0] == 0 or np.all(prob.G @ x <= prob.h + tol * (1.0 + np.abs(prob.h))))
        and (prob.E.shape[0] == 0 or np.all(np.abs(prob.E @ x - prob.e) <= tol * (1.0 + np.abs(prob.e))))
    )
    if feasible:
        return x.copy()
    return solve_qp(prob, x0=x0, tol=tol).x
