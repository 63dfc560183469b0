"""Certifying that close slopes force close function values.

For convex ``f, g`` with ``C_f = argmin f`` nonempty and ``x`` within distance
``r`` of ``C_f``::

    g(x) - f(x) <= S d + V + 2 sqrt(d S (f(x) - f_*))

where ``S`` is the one-sided sup of ``s_g - s_f`` over the tube ``U_r``, ``V``
the one-sided sup of ``g - f`` over ``C_f`` and ``d = d(x, C_f)``.  The right
side is the minimum over ``delta > 0`` of the parametric bound
``(S + delta) d + (S / delta)(f(x) - f_*) + V`` computed by :func:`ad1_rhs`.

A sampled sup over the tube underestimates ``S``, which would make the check
unsound.  Certification therefore uses the sup over the points the argument
actually visits: ``x``, every point of the flow of ``f`` started at ``x`` and
the projections of all of them onto ``C_f``.  The tube estimate is reported
alongside for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import (
    ConvexFunction,
    argmin,
    dist_to_argmin,
    evaluate,
    project_argmin,
    slope,
)
from .minnorm_qp import UnboundedError, solve_lp
from .flow import FlowOptions, FlowTrajectory, integrate, truncate_at_slope
from .bounds import kn_ratio

__all__ = [
    "Tube",
    "DeviationReport",
    "VerifyOptions",
    "CorollaryReport",
    "one_sided_sup",
    "two_sided_sup",
    "slopes_at",
    "make_tube",
    "slope_deviation",
    "value_deviation_on_argmin",
    "main_rhs",
    "ad1_rhs",
    "cv1_rhs",
    "optimal_delta",
    "delta_grid",
    "theorem_rhs",
    "verify_instance",
    "corollary_check",
    "REPORT_COLUMNS",
]

REPORT_COLUMNS = (
    "instance_id", "n", "r", "dist_x", "gap_x", "slope_dev_tube", "slope_dev_traj",
    "value_dev_argmin", "delta_star", "lhs", "rhs_main", "rhs_cv1", "margin",
    "proof_case", "passed",
)


def one_sided_sup(values) -> float:
    """``max(0, max(values))``; zero for an empty list."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        return 0.0
    return float(max(0.0, v.max()))


def two_sided_sup(values) -> float:
    v = np.asarray(values, dtype=float).reshape(-1)
    return float(np.abs(v).max()) if v.size else 0.0


def slopes_at(f: ConvexFunction, X, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if f.m == 0:
        return np.linalg.norm((X - f.quad_center) @ f.quad_matrix, axis=1)
    return np.array([slope(f, x, tol=tol) for x in X])


# ---------------------------------------------------------------------------
# Tube sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Tube:
    """Sampled neighbourhood ``{x : d(x, C_f) <= radius}``."""

    f: ConvexFunction
    radius: float
    samples: np.ndarray
    tol: Tolerances = DEFAULT_TOLERANCES

    def contains(self, x) -> bool:
        return bool(dist_to_argmin(self.f, x, tol=self.tol) <= self.radius + 1e-8)


def make_tube(
    f: ConvexFunction,
    radius: float,
    n_samples: int = 4096,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
    max_rounds: int = 64,
) -> Tube:
    """Low-discrepancy samples of the tube of radius ``radius`` around ``C_f``.

    Scrambled Sobol points fill the bounding box of ``C_f`` inflated by the
    radius and are filtered by distance.
    """
    if not radius > 0:
        raise ValueError("tube radius must be positive")
    desc = argmin(f, tol=tol)
    lo, hi = desc.bounding_box()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("tube sampling needs a bounded argmin set")
    lo, hi = lo - radius, hi + radius
    if n_samples <= 0:
        return Tube(f, radius, np.zeros((0, f.n)), tol)
    sampler = qmc.Sobol(d=f.n, scramble=True, seed=seed)
    kept = []
    count = 0
    batch = 1 << max(1, int(math.ceil(math.log2(n_samples))))
    for _ in range(max_rounds):
        U = sampler.random(batch)
        X = lo + U * (hi - lo)
        d = dist_to_argmin(f, X, tol=tol)
        X = X[d <= radius]
        kept.append(X)
        count += X.shape[0]
        if count >= n_samples:
            break
    S = np.vstack(kept)[:n_samples]
    return Tube(f, radius, S, tol)


# ---------------------------------------------------------------------------
# Bound formulas
# ---------------------------------------------------------------------------


def main_rhs(slope_dev: float, value_dev: float, dist: float, gap: float) -> float:
    """``S d + V + 2 sqrt(d S gap)``."""
    return slope_dev * dist + value_dev + 2.0 * math.sqrt(max(dist * slope_dev * gap, 0.0))


def optimal_delta(slope_dev: float, dist: float, gap: float) -> float:
    """Minimizer ``sqrt(S gap / d)`` of the parametric bound (0 when degenerate)."""
    if dist <= 0 or slope_dev <= 0 or gap <= 0:
        return 0.0
    return math.sqrt(slope_dev * gap / dist)


def ad1_rhs(slope_dev: float, value_dev: float, dist: float, gap: float, delta) -> np.ndarray | float:
    """``(S + delta) d + (S / delta) gap + V`` for ``delta > 0``."""
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise ValueError("delta must be positive")
    out = (slope_dev + delta) * dist + (slope_dev / delta) * gap + value_dev
    return float(out) if out.ndim == 0 else out


def delta_grid(delta_star: float, points: int = 33, span: float = 16.0) -> np.ndarray:
    """Geometric grid over ``[delta*/span, span delta*]`` (centre point is ``delta*``)."""
    if delta_star <= 0:
        return np.zeros(0)
    return delta_star * np.geomspace(1.0 / span, span, points)


def cv1_rhs(slope_dev: float, value_dev: float, dist: float, K: float) -> float:
    """``K S d + V``: the bound without the square root, for a length constant ``K``."""
    return K * slope_dev * dist + value_dev


# ---------------------------------------------------------------------------
# Deviations
# ---------------------------------------------------------------------------


def value_deviation_on_argmin(
    f: ConvexFunction, g: ConvexFunction, tol: Tolerances = DEFAULT_TOLERANCES,
    directions: int = 64, seed: int = 0,
) -> tuple[float, bool]:
    """One-sided sup of ``g - f`` over ``C_f`` and whether it is exact.

    ``f`` equals ``f_*`` on ``C_f``, so the sup is that of the convex function
    ``g`` there, attained at an extreme point.  When the quadratic part of
    ``g`` is affine on ``C_f`` (always the case for perturbations that keep
    the quadratic part proportional) the sup is the largest of one LP per
    affine piece of ``g``, which is exact.  Otherwise LP vertices in random
    directions give a lower estimate.
    """
    desc = argmin(f, tol=tol)
    if desc.kind == "singleton":
        y = desc.witness
        return one_sided_sup([evaluate(g, y) - evaluate(f, y)]), True
    n = f.n
    E = desc.E
    if E.shape[0]:
        _, s, Vt = np.linalg.svd(E)
        N = Vt[int(np.sum(s > 1e-12)):].T
    else:
        N = np.eye(n)
    grad_q = g.quad_matrix @ (desc.witness - g.quad_center)
    exact = bool(np.abs(g.quad_matrix @ N).max(initial=0.0) <= 1e-12 * (1.0 + np.abs(g.quad_matrix).max()))
    if exact:
        objectives = [grad_q + a for a in g.affine_slopes] if g.m else [grad_q]
    else:
        rng = np.random.default_rng(seed)
        objectives = [grad_q + a for a in g.affine_slopes] + list(rng.normal(size=(directions, n)))
    values = [evaluate(g, desc.witness) - evaluate(f, desc.witness)]
    for c in objectives:
        try:
            y = solve_lp(-np.asarray(c), desc.G, desc.h, desc.E, desc.e)
        except UnboundedError:
            return float("inf"), exact
        values.append(evaluate(g, y) - evaluate(f, y))
    return one_sided_sup(values), exact


def certificate_points(f: ConvexFunction, traj: FlowTrajectory, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """Projections onto ``C_f`` of the flow points of ``f``.

    Together with the flow points themselves (whose slopes the trajectory
    already carries) these are the certificate points.
    """
    desc = argmin(f, tol=tol)
    if desc.kind == "singleton":
        return desc.witness.reshape(1, -1)
    return np.array([project_argmin(f, p, tol=tol)[0] for p in traj.points])


def slope_deviation(
    f: ConvexFunction,
    g: ConvexFunction,
    tube: Optional[Tube] = None,
    cert_points: Optional[np.ndarray] = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
    traj: Optional[FlowTrajectory] = None,
) -> tuple[float, float]:
    """``(tube_estimate, traj_certificate)`` one-sided sups of ``s_g - s_f``.

    The certificate is taken over ``cert_points`` and, when given, the points
    of ``traj`` (a flow of ``f``, whose recorded slopes are reused).
    """
    tube_est = 0.0
    if tube is not None and tube.samples.shape[0]:
        X = tube.samples
        tube_est = one_sided_sup(slopes_at(g, X, tol) - slopes_at(f, X, tol))
    diffs = []
    if cert_points is not None and len(cert_points):
        X = np.atleast_2d(cert_points)
        diffs.append(slopes_at(g, X, tol) - slopes_at(f, X, tol))
    if traj is not None:
        diffs.append(slopes_at(g, traj.points, tol) - traj.slopes)
    cert = one_sided_sup(np.concatenate(diffs)) if diffs else 0.0
    return tube_est, cert


# ---------------------------------------------------------------------------
# Instance verification
# ---------------------------------------------------------------------------


# Certification only needs the points the flow visits, not accurate slope
# integrals, so kinks are refined less than in the default flow.
VERIFY_FLOW = FlowOptions(slope_drop_tol=0.5, min_step_fraction=1.0 / 64.0)


@dataclass(frozen=True)
class VerifyOptions:
    """Controls for :func:`verify_instance`.

    ``K`` is the length constant used in the square-root-free bound; ``None``
    uses the ratio observed on this instance's own trajectory.
    """

    flow: FlowOptions = VERIFY_FLOW
    tube_samples: int = 0
    seed: int = 0
    K: Optional[float] = None
    delta_points: int = 33
    delta_span: float = 16.0
    keep_sequence: bool = True
    tol: Tolerances = DEFAULT_TOLERANCES


@dataclass(frozen=True, eq=False)
class DeviationReport:
    """Every term of the stability bound for one ``(f, g, x, r)``."""

    x: np.ndarray
    r: float
    dist_x: float
    gap_x: float
    slope_dev_tube: float
    slope_dev_traj: float
    value_dev_argmin: float
    value_dev_exact: bool
    delta_star: float
    lhs: float
    rhs_main: float
    rhs_main_tube: float
    rhs_ad1_grid: np.ndarray
    delta_grid: np.ndarray
    rhs_cv1: float
    K: float
    kn_ratio: float
    margin: float
    margin_cv1: float
    proof_case: str
    truncation_index: int
    ad3_rhs: float
    scale: float
    slack: float
    passed: bool
    passed_cv1: bool
    a_sequence: Optional[np.ndarray] = None
    instance_id: object = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def ad1_grid_min(self) -> float:
        if self.rhs_ad1_grid.size == 0:
            return self.rhs_main
        return float(self.rhs_ad1_grid.min())

    def csv_row(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "n": self.n,
            "r": self.r,
            "dist_x": self.dist_x,
            "gap_x": self.gap_x,
            "slope_dev_tube": self.slope_dev_tube,
            "slope_dev_traj": self.slope_dev_traj,
            "value_dev_argmin": self.value_dev_argmin,
            "delta_star": self.delta_star,
            "lhs": self.lhs,
            "rhs_main": self.rhs_main,
            "rhs_cv1": self.rhs_cv1,
            "margin": self.margin,
            "proof_case": self.proof_case,
            "passed": self.passed,
        }

    def to_dict(self) -> dict:
        d = self.csv_row()
        d.update(
            x=self.x.tolist(),
            value_dev_exact=self.value_dev_exact,
            rhs_main_tube=self.rhs_main_tube,
            ad1_grid_min=self.ad1_grid_min,
            K=self.K,
            kn_ratio=self.kn_ratio,
            margin_cv1=self.margin_cv1,
            passed_cv1=self.passed_cv1,
            truncation_index=self.truncation_index,
            ad3_rhs=self.ad3_rhs,
            scale=self.scale,
            slack=self.slack,
        )
        if self.a_sequence is not None:
            d["a_sequence"] = self.a_sequence.tolist()
        return d


def theorem_rhs(
    f: ConvexFunction,
    g: ConvexFunction,
    x,
    tube: Tube,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> DeviationReport:
    """Populate the bound terms at ``x`` using the sampled tube only.

    This skips the flow; :func:`verify_instance` is the sound certificate.
    """
    x = np.asarray(x, dtype=float)
    desc = argmin(f, tol=tol)
    _, dist = project_argmin(f, x, tol=tol)
    gap = evaluate(f, x) - desc.min_value
    S, _ = slope_deviation(f, g, tube, None, tol)
    # the tube sample set does not always contain x itself
    S = max(S, one_sided_sup([slope(g, x, tol=tol) - slope(f, x, tol=tol)]))
    V, exact = value_deviation_on_argmin(f, g, tol)
    lhs = evaluate(g, x) - evaluate(f, x)
    rhs = main_rhs(S, V, dist, gap)
    ds = optimal_delta(S, dist, gap)
    grid = delta_grid(ds)
    scale = 1.0 + abs(evaluate(f, x)) + abs(evaluate(g, x)) + gap
    slack = tol.slack(scale)
    return DeviationReport(
        x=x, r=tube.radius, dist_x=dist, gap_x=gap, slope_dev_tube=S, slope_dev_traj=float("nan"),
        value_dev_argmin=V, value_dev_exact=exact, delta_star=ds, lhs=lhs, rhs_main=rhs,
        rhs_main_tube=rhs,
        rhs_ad1_grid=ad1_rhs(S, V, dist, gap, grid) if grid.size else np.zeros(0),
        delta_grid=grid, rhs_cv1=float("nan"), K=float("nan"), kn_ratio=float("nan"),
        margin=rhs - lhs, margin_cv1=float("nan"), proof_case="tube", truncation_index=-1,
        ad3_rhs=float("nan"), scale=scale, slack=slack, passed=bool(lhs <= rhs + slack),
        passed_cv1=False,
    )


def verify_instance(
    f: ConvexFunction,
    g: ConvexFunction,
    x,
    r: float,
    opts: VerifyOptions = VerifyOptions(),
    instance_id=None,
    traj: Optional[FlowTrajectory] = None,
) -> DeviationReport:
    """Run the full argument for one instance and certify the bound.

    Steps: flow of ``f`` from ``x``; slope deviations at the flow points and
    their projections; value deviation on ``C_f``; the optimal threshold and
    the case split it induces; truncation of the flow at that threshold; the
    deviation sequence ``a_k = f(x_k) - g(x_k)``.  ``passed`` is
    ``lhs <= rhs_main + slack`` with the trajectory-certified slope deviation.

    Raises
    ------
    ValueError
        If ``x`` lies outside the tube of radius ``r``, or ``traj`` (a
        precomputed flow of ``f``) does not start at ``x``.
    """
    tol = opts.tol
    x = np.asarray(x, dtype=float).reshape(-1)
    desc = argmin(f, tol=tol)
    _, dist = project_argmin(f, x, tol=tol)
    if dist > r * (1.0 + 1e-12) + tol.tol_argmin:
        raise ValueError(f"x is at distance {dist} from C_f, outside the tube of radius {r}")
    fx, gx = evaluate(f, x), evaluate(g, x)
    gap = fx - desc.min_value
    lhs = gx - fx
    scale = 1.0 + abs(fx) + abs(gx) + gap
    slack = tol.slack(scale)

    if traj is None:
        traj = integrate(f, x, opts.flow, tol=tol)
    elif not np.array_equal(traj.x0, x):
        raise ValueError("trajectory does not start at x")
    cert_pts = certificate_points(f, traj, tol)
    tube = make_tube(f, r, opts.tube_samples, opts.seed, tol) if opts.tube_samples > 0 else None
    sg_traj = slopes_at(g, traj.points, tol)
    S_tube, S_proj = slope_deviation(f, g, tube, cert_pts, tol)
    S_cert = max(S_proj, one_sided_sup(sg_traj - traj.slopes))
    V, exact = value_deviation_on_argmin(f, g, tol)

    ds = optimal_delta(S_cert, dist, gap)
    if dist <= tol.tol_argmin:
        case = "argmin"
    elif traj.slopes[0] <= ds:
        case = "i"
    else:
        case = "ii"
    T = truncate_at_slope(traj, ds) if ds > 0 else len(traj) - 1

    g_traj = evaluate(g, traj.points)
    a_seq = traj.values - g_traj
    # discrete chain: (g-f)(x_k) - (g-f)(x_{k+1}) <= (s_g(x_k) - |v_k|) |x_k - x_{k+1}|
    if len(traj) > 1:
        steps = np.diff(traj.cum_length)
        ad3 = float(-a_seq[-1] + np.sum((sg_traj[:-1] - traj.velocities) * steps))
    else:
        ad3 = float(-a_seq[-1])

    rhs = main_rhs(S_cert, V, dist, gap)
    rhs_tube = main_rhs(max(S_tube, S_cert), V, dist, gap)
    grid = delta_grid(ds, opts.delta_points, opts.delta_span)
    ad1 = ad1_rhs(S_cert, V, dist, gap, grid) if grid.size else np.zeros(0)
    ratio = kn_ratio(traj)
    K = ratio if opts.K is None else opts.K
    cv1 = cv1_rhs(S_cert, V, dist, K)

    return DeviationReport(
        x=x, r=r, dist_x=dist, gap_x=gap, slope_dev_tube=S_tube, slope_dev_traj=S_cert,
        value_dev_argmin=V, value_dev_exact=exact, delta_star=ds, lhs=lhs, rhs_main=rhs,
        rhs_main_tube=rhs_tube, rhs_ad1_grid=ad1, delta_grid=grid, rhs_cv1=cv1, K=K,
        kn_ratio=ratio, margin=rhs - lhs, margin_cv1=cv1 - lhs, proof_case=case,
        truncation_index=T, ad3_rhs=ad3, scale=scale, slack=slack,
        passed=bool(lhs <= rhs + slack), passed_cv1=bool(lhs <= cv1 + slack),
        a_sequence=a_seq if opts.keep_sequence else None, instance_id=instance_id,
    )


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CorollaryReport:
    """Per-index deviations of a sequence ``f_k`` from ``f`` on a bounded set.

    Arrays are indexed like the input sequence.  ``envelope`` is the largest
    stability bound over the sampled set; ``value_dev_set`` must stay below it.
    With ``two_sided`` the roles are also swapped and ``*_two_sided`` fields
    hold the symmetric quantities.
    """

    slope_dev: np.ndarray
    value_dev_argmin: np.ndarray
    value_dev_set: np.ndarray
    envelope: np.ndarray
    dominated: np.ndarray
    radius: float
    rejected: bool = False
    reason: str = ""
    value_dev_set_two_sided: Optional[np.ndarray] = None
    envelope_two_sided: Optional[np.ndarray] = None
    dominated_two_sided: Optional[np.ndarray] = None

    @property
    def all_dominated(self) -> bool:
        ok = bool(np.all(self.dominated))
        if self.dominated_two_sided is not None:
            ok = ok and bool(np.all(self.dominated_two_sided))
        return ok and not self.rejected

    def monotone_decreasing(self, noise: float = 1e-9) -> bool:
        v = self.value_dev_set
        return bool(np.all(np.diff(v) <= noise * (1.0 + np.abs(v[:-1]))))


def _ball_samples(center: np.ndarray, radius: float, count: int, seed: int) -> np.ndarray:
    n = center.shape[0]
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    out = [center.reshape(1, -1)]
    got = 1
    batch = 1 << max(1, int(math.ceil(math.log2(max(count, 2)))))
    while got < count:
        X = center + radius * (2.0 * sampler.random(batch) - 1.0)
        X = X[np.linalg.norm(X - center, axis=1) <= radius]
        out.append(X)
        got += X.shape[0]
    return np.vstack(out)[:count]


def _one_direction(base: ConvexFunction, other: ConvexFunction, U: np.ndarray, radius: float,
                   tube_samples: int, seed: int, tol: Tolerances):
    """Deviation of ``other - base`` on ``U`` and its stability envelope."""
    desc = argmin(base, tol=tol)
    d_U = dist_to_argmin(base, U, tol=tol)
    gap_U = evaluate(base, U) - desc.min_value
    r = max(radius, float(d_U.max()), 1e-12)
    tube = make_tube(base, r, tube_samples, seed, tol)
    X = np.vstack([tube.samples, U])
    S = one_sided_sup(slopes_at(other, X, tol) - slopes_at(base, X, tol))
    V, _ = value_deviation_on_argmin(base, other, tol)
    dev = evaluate(other, U) - evaluate(base, U)
    env = max(main_rhs(S, V, float(d), float(gp)) for d, gp in zip(d_U, gap_U))
    return S, V, dev, env


def corollary_check(
    f: ConvexFunction,
    sequence: Sequence[ConvexFunction],
    center,
    radius: float,
    n_samples: int = 1024,
    tube_samples: int = 1024,
    two_sided: bool = False,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> CorollaryReport:
    """Deviation of each ``f_k`` from ``f`` on the ball ``B(center, radius)``.

    The slope deviation is sampled on the tube around ``C_f`` containing the
    ball; the envelope is the stability bound built from it and the value
    deviation on ``C_f``.  A sequence whose argmin sets are not uniformly
    bounded violates the hypotheses and is rejected.
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    U = _ball_samples(center, radius, n_samples, seed)
    k = len(sequence)
    for fk in [f, *sequence]:
        try:
            bounded = argmin(fk, tol=tol).bounded
        except UnboundedError:
            bounded = False
        if not bounded:
            empty = np.zeros(k)
            return CorollaryReport(empty, empty, empty, empty, np.zeros(k, dtype=bool), radius,
                                   rejected=True, reason="argmin union is unbounded")
    S = np.zeros(k)
    V = np.zeros(k)
    dev = np.zeros(k)
    env = np.zeros(k)
    dev2 = np.zeros(k)
    env2 = np.zeros(k)
    for i, fk in enumerate(sequence):
        S[i], V[i], d, env[i] = _one_direction(f, fk, U, radius, tube_samples, seed, tol)
        dev[i] = one_sided_sup(d)
        if two_sided:
            _, _, d2, e2 = _one_direction(fk, f, U, radius, tube_samples, seed, tol)
            dev2[i] = two_sided_sup(d)
            env2[i] = max(env[i], e2)
            dev2[i] = max(dev2[i], one_sided_sup(d2))
    scale = 1.0 + np.abs(evaluate(f, U)).max()
    slack = tol.slack(scale)
    rep = CorollaryReport(
        slope_dev=S, value_dev_argmin=V, value_dev_set=dev, envelope=env,
        dominated=dev <= env + slack, radius=radius,
    )
    if two_sided:
        rep = CorollaryReport(
            slope_dev=S, value_dev_argmin=V, value_dev_set=dev, envelope=env,
            dominated=dev <= env + slack, radius=radius,
            value_dev_set_two_sided=dev2, envelope_two_sided=env2,
            dominated_two_sided=dev2 <= env2 + slack,
        )
    return rep
