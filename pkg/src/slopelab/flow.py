"""Subgradient flow integration by the proximal point (implicit Euler) scheme.

Each step solves ``x_{k+1} = prox_{h_k f}(x_k)``, so that
``(x_k - x_{k+1}) / h_k`` is a subgradient of ``f`` at ``x_{k+1}``.  For convex
``f`` this discretisation keeps the monotonicity structure of the continuous
flow exactly: slopes and velocities do not increase, values decrease along a
discretely convex profile, and distances to every minimizer shrink.

When a step lands in the argmin set the step length is refined by bisection
to the smallest step that still lands there, so finite-time arrival (the
polyhedral case) is resolved to near machine precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import ConvexFunction, argmin, dist_to_argmin, evaluate, prox, slope

__all__ = [
    "FlowError",
    "FlowOptions",
    "FlowTrajectory",
    "PropertyReport",
    "integrate",
    "check_properties",
    "truncate_at_slope",
    "arc_length",
    "trajectory_jsonl",
]

TERMINATIONS = ("slope_floor_reached", "value_gap_reached", "time_cap", "reached_argmin")


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowOptions:
    """Integration controls.

    Attributes
    ----------
    initial_step : float or None
        First trial step.  ``None`` picks ``trust / slope(x0)``.
    step_tol : float
        Trust length as a fraction of ``d(x0, C_f)``; a step that moves
        farther is halved.
    slope_floor : float
        Stop once the slope falls to this value.
    value_gap_floor : float
        Stop once ``f - f_*`` falls below this fraction of the initial gap.
    time_cap : float
        Final time; the last step is clipped to hit it exactly.
    exact : bool
        Use the closed-form flow (pure quadratics only).
    adaptive : bool
        Enable halving / doubling.  With ``False`` every step equals
        ``initial_step``.
    max_steps : int
        Hard cap on accepted steps (reported as ``time_cap``).
    slope_drop_tol : float
        A step whose end speed or end slope falls below
        ``(1 - slope_drop_tol)`` times the start slope is halved (a kink
        was crossed or the flow is stiff there), down to
        ``min_step_fraction * trust``.  This keeps slope integrals
        along the trajectory accurate.
    """

    initial_step: Optional[float] = None
    step_tol: float = 0.05
    slope_floor: float = 1e-12
    value_gap_floor: float = 1e-10
    time_cap: float = 1e9
    exact: bool = False
    adaptive: bool = True
    max_steps: int = 200_000
    refine_arrival: bool = True
    slope_drop_tol: float = 0.05
    min_step_fraction: float = 1.0 / 1024.0

    def __post_init__(self):
        for name in ("step_tol", "slope_floor", "value_gap_floor", "time_cap", "slope_drop_tol",
                     "min_step_fraction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"FlowOptions.{name} must be positive")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("FlowOptions.initial_step must be positive")


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    """A discretised solution of the subgradient flow.

    ``velocities[k]`` is ``|x_{k+1} - x_k| / (t_{k+1} - t_k)``, the norm of the
    subgradient selected by the implicit step at ``x_{k+1}`` (a left limit of
    the slope there).  ``dist_to_point`` tracks the distance to one fixed
    minimizer.
    """

    times: np.ndarray
    points: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    dist_to_argmin: np.ndarray
    cum_length: np.ndarray
    velocities: np.ndarray
    dist_to_point: np.ndarray
    termination: str
    min_value: float
    scale: float = 1.0

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def x0(self) -> np.ndarray:
        return self.points[0]

    @property
    def total_length(self) -> float:
        return float(self.cum_length[-1])


def _closed_form_stepper(f: ConvexFunction, x0: np.ndarray) -> Callable:
    w, V = np.linalg.eigh(f.quad_matrix)
    coef = V.T @ (x0 - f.quad_center)

    def at(t: float) -> np.ndarray:
        return f.quad_center + V @ (np.exp(-w * t) * coef)

    return at


def integrate(
    f: ConvexFunction,
    x0,
    opts: FlowOptions = FlowOptions(),
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> FlowTrajectory:
    """Integrate the subgradient flow of ``f`` from ``x0``.

    Raises
    ------
    FlowError
        On step underflow (a step halved below ``1e-12``).
    """
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    desc = argmin(f, tol=tol)
    fstar = desc.min_value
    anchor = desc.witness
    if opts.exact and not f.is_pure_quadratic:
        raise ValueError("exact mode needs a pure quadratic")
    exact = _closed_form_stepper(f, x) if opts.exact else None

    fx = evaluate(f, x)
    sx = slope(f, x, tol=tol)
    dx = dist_to_argmin(f, x, tol=tol)
    times, pts, vals, slopes_, dists, lens, vels, dpt = [0.0], [x], [fx], [sx], [dx], [0.0], [], []
    dpt.append(float(np.linalg.norm(x - anchor)))
    gap0 = fx - fstar
    scale = 1.0 + abs(fx) + abs(fstar)

    def done(k_extra: str) -> FlowTrajectory:
        return FlowTrajectory(
            times=np.array(times),
            points=np.array(pts),
            values=np.array(vals),
            slopes=np.array(slopes_),
            dist_to_argmin=np.array(dists),
            cum_length=np.array(lens),
            velocities=np.array(vels),
            dist_to_point=np.array(dpt),
            termination=k_extra,
            min_value=fstar,
            scale=scale,
        )

    if dx <= tol.tol_argmin or sx == 0.0:
        return done("reached_argmin")
    if sx <= opts.slope_floor:
        return done("slope_floor_reached")

    trust = opts.step_tol * dx
    h = opts.initial_step if opts.initial_step is not None else trust / sx
    t = 0.0
    clean = 0

    def advance(xc: np.ndarray, tc: float, hc: float) -> np.ndarray:
        if exact is not None:
            return exact(tc + hc)
        return prox(f, hc, xc, tol=tol)

    def lands(y: np.ndarray, within: float = tol.tol_argmin) -> bool:
        return exact is None and dist_to_argmin(f, y, tol=tol) <= within

    for _ in range(opts.max_steps):
        if t >= opts.time_cap:
            return done("time_cap")
        h_try = min(h, opts.time_cap - t)
        y = advance(x, t, h_try)
        move = float(np.linalg.norm(y - x))
        arrived = lands(y)
        if opts.adaptive and move > trust and not arrived:
            h = 0.5 * h_try
            clean = 0
            if h < 1e-12:
                raise FlowError(f"step underflow at t={t}")
            continue
        if arrived and opts.refine_arrival:
            # polyhedral arrivals are exact, so refine against a much tighter radius
            tight = 1e-13 * (1.0 + float(np.linalg.norm(y)))
            within = tight if lands(y, tight) else tol.tol_argmin
            lo, hi = 0.0, h_try
            while hi - lo > 1e-13 * hi:
                mid = 0.5 * (lo + hi)
                if lands(advance(x, t, mid), within):
                    hi = mid
                else:
                    lo = mid
            h_try = hi
            y = advance(x, t, hi)
            move = float(np.linalg.norm(y - x))
        sy = slope(f, y, tol=tol)
        end_speed = min(move / h_try, sy)
        kink = end_speed < (1.0 - opts.slope_drop_tol) * slopes_[-1] and move > opts.min_step_fraction * trust
        if opts.adaptive and not arrived and (kink or sy > slopes_[-1] + 1e-6 * (1.0 + slopes_[-1])):
            h = 0.5 * h_try
            clean = 0
            if h < 1e-12:
                raise FlowError(f"step underflow at t={t}")
            continue

        t += h_try
        fy = evaluate(f, y)
        times.append(t)
        pts.append(y)
        vals.append(fy)
        slopes_.append(sy)
        dists.append(dist_to_argmin(f, y, tol=tol))
        lens.append(lens[-1] + move)
        vels.append(move / h_try)
        dpt.append(float(np.linalg.norm(y - anchor)))
        x = y

        if arrived:
            return done("reached_argmin")
        if sy <= opts.slope_floor:
            return done("slope_floor_reached")
        if fy - fstar <= opts.value_gap_floor * gap0:
            return done("value_gap_reached")
        if opts.adaptive:
            clean += 1
            if clean >= 5:
                h = 2.0 * h_try
                clean = 0
            else:
                h = max(h, h_try)
    return done("time_cap")


@dataclass(frozen=True)
class PropertyReport:
    """Largest violation of each monotonicity property and where it occurs.

    Each entry is ``(violation, index)`` with ``violation >= 0``; index ``-1``
    means no violation at all.
    """

    p1_slope: tuple
    p2_decrease: tuple
    p2_convexity: tuple
    p3_dist: tuple
    p3_point: tuple
    scale: float = 1.0

    def ok(self, slope_tol=1e-6, decrease_tol=1e-9, convexity_tol=1e-6, dist_tol=1e-8) -> bool:
        return (
            self.p1_slope[0] <= slope_tol
            and self.p2_decrease[0] <= decrease_tol * self.scale
            and self.p2_convexity[0] <= convexity_tol * self.scale
            and self.p3_dist[0] <= dist_tol
            and self.p3_point[0] <= dist_tol
        )


def _worst_increase(seq: np.ndarray) -> tuple:
    if seq.shape[0] < 2:
        return (0.0, -1)
    inc = np.diff(seq)
    k = int(np.argmax(inc))
    if inc[k] <= 0:
        return (0.0, -1)
    return (float(inc[k]), k + 1)


def check_properties(traj: FlowTrajectory) -> PropertyReport:
    """Monotonicity report for a trajectory.

    Slopes must not increase, values must decrease along a convex profile in
    time (checked through nondecreasing divided differences), and both the
    distance to the argmin set and the distance to a fixed minimizer must not
    increase.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    conv = (0.0, -1)
    if len(traj) >= 3:
        rates = np.diff(traj.values) / np.diff(traj.times)
        drop = -np.diff(rates)
        k = int(np.argmax(drop))
        if drop[k] > 0:
            conv = (float(drop[k]), k + 1)
    return PropertyReport(
        p1_slope=_worst_increase(traj.slopes),
        p2_decrease=_worst_increase(traj.values),
        p2_convexity=conv,
        p3_dist=_worst_increase(traj.dist_to_argmin),
        p3_point=_worst_increase(traj.dist_to_point),
        scale=traj.scale,
    )


def truncate_at_slope(traj: FlowTrajectory, delta: float) -> int:
    """Last index whose slope exceeds ``delta`` (0 if there is none)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    above = np.flatnonzero(traj.slopes > delta)
    return int(above[-1]) if above.size else 0


def arc_length(traj: FlowTrajectory, upto: int) -> float:
    if not -len(traj) <= upto < len(traj):
        raise IndexError(f"index {upto} out of range for a trajectory of {len(traj)} points")
    return float(traj.cum_length[upto])


def trajectory_jsonl(traj: FlowTrajectory) -> str:
    """One JSON record per point: ``t, x, f, slope, dist, cumlen``."""
    lines = []
    for k in range(len(traj)):
        rec = {
            "t": float(traj.times[k]),
            "x": traj.points[k].tolist(),
            "f": float(traj.values[k]),
            "slope": float(traj.slopes[k]),
            "dist": float(traj.dist_to_argmin[k]),
            "cumlen": float(traj.cum_length[k]),
        }
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"
