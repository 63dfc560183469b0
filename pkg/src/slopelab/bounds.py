"""Length certificates for subgradient curves and value recovery from slopes."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Iterable, Optional

import numpy as np

from .convex_core import ConvexFunction
from .flow import FlowTrajectory, truncate_at_slope

__all__ = [
    "LengthCertificate",
    "KnStudy",
    "ValueReconstruction",
    "lemma1_certificate",
    "kn_ratio",
    "kn_ratio_study",
    "kn_order_bound",
    "reconstruct_value_gap",
    "CERTIFICATE_COLUMNS",
]

CERTIFICATE_COLUMNS = (
    "instance_id", "n", "dist_x0", "f_gap", "delta", "T_index",
    "length_T", "lemma1_bound", "kn_ratio", "passed",
)


@dataclass(frozen=True)
class LengthCertificate:
    """Length of the flow up to the slope threshold against ``gap / slope``.

    ``slope_T`` is the slope used in the denominator.  When the step leaving
    ``gamma_T`` still moves faster than ``delta`` the certified stretch
    includes that step and ``slope_T`` is its implicit-Euler speed, the left
    limit of the slope at the end of the step (this resolves finite-time
    arrivals exactly).  Otherwise the stretch ends at ``gamma_T`` and
    ``slope_T`` is the slope there.  Both forms are exact discrete
    inequalities and both keep ``slope_T > delta``.
    """

    truncation_index: int
    length_to_T: float
    slope_T: float
    lemma1_bound: float
    delta_bound: float
    kn_ratio: float
    dist_x0: float
    f_gap: float
    delta: float
    passed: bool
    degenerate: bool = False

    def csv_row(self, instance_id, n: int) -> dict:
        return {
            "instance_id": instance_id,
            "n": n,
            "dist_x0": self.dist_x0,
            "f_gap": self.f_gap,
            "delta": self.delta,
            "T_index": self.truncation_index,
            "length_T": self.length_to_T,
            "lemma1_bound": self.lemma1_bound,
            "kn_ratio": self.kn_ratio,
            "passed": self.passed,
        }


def kn_ratio(traj: FlowTrajectory) -> float:
    """Flow length over initial distance to the argmin set.

    The length still to be travelled is at least the remaining distance, so
    that distance is added; the ratio is then a lower estimate of the full
    curve's ratio and is never below one.
    """
    d0 = float(traj.dist_to_argmin[0])
    if d0 <= 0.0:
        return 1.0
    return (traj.total_length + float(traj.dist_to_argmin[-1])) / d0


def lemma1_certificate(
    f: ConvexFunction, traj: FlowTrajectory, delta: float, slack: float = 1e-6
) -> LengthCertificate:
    """Check ``length(0..T) <= (f(x0) - f_*) / slope(gamma_T)``.

    ``slack`` is multiplied by the trajectory scale.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    fgap = float(traj.values[0] - traj.min_value)
    d0 = float(traj.dist_to_argmin[0])
    ratio = kn_ratio(traj)
    T = truncate_at_slope(traj, delta)
    if traj.slopes[0] <= delta:
        # threshold already met at x0: empty stretch
        return LengthCertificate(0, 0.0, float(traj.slopes[0]), _safe_div(fgap, traj.slopes[0]),
                                 fgap / delta, ratio, d0, fgap, delta, True,
                                 degenerate=bool(traj.slopes[0] < 1e-14))
    if T + 1 < len(traj) and traj.velocities[T] >= delta:
        length = float(traj.cum_length[T + 1])
        s_T = float(traj.velocities[T])
    else:
        length = float(traj.cum_length[T])
        s_T = float(traj.slopes[T])
    degenerate = s_T < 1e-14
    bound = _safe_div(fgap, s_T)
    passed = bool(length <= bound + slack * traj.scale)
    return LengthCertificate(T, length, s_T, bound, fgap / delta, ratio, d0, fgap, delta,
                             passed, degenerate)


def _safe_div(a: float, b: float) -> float:
    return float(a / b) if b > 0 else (0.0 if a <= 0 else float("inf"))


def kn_order_bound(n: int) -> float:
    """The dimension-dependent order ``n^(n/2 + 1)`` of the length constant."""
    return float(n) ** (n / 2.0 + 1.0)


@dataclass(frozen=True)
class KnStudy:
    n: int
    count: int
    max_ratio: float
    mean_ratio: float
    quantiles: dict
    bound: float
    within_bound: bool
    ratios: tuple

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("ratios")
        return d


def kn_ratio_study(trajectories: Iterable[FlowTrajectory], n: int, slack: float = 1e-6) -> KnStudy:
    """Distribution of length / distance ratios over finished trajectories.

    Raises
    ------
    ValueError
        If a trajectory stopped before reaching the argmin set or the value floor.
    """
    ratios = []
    for traj in trajectories:
        if traj.termination not in ("reached_argmin", "value_gap_reached"):
            raise ValueError(f"trajectory terminated by {traj.termination!r}; study needs finished flows")
        if traj.dist_to_argmin[0] > 0:
            ratios.append(kn_ratio(traj))
    r = np.array(ratios) if ratios else np.ones(1)
    bound = kn_order_bound(n)
    return KnStudy(
        n=n,
        count=len(ratios),
        max_ratio=float(r.max()),
        mean_ratio=float(r.mean()),
        quantiles={str(q): float(np.quantile(r, q)) for q in (0.5, 0.9, 0.99)},
        bound=bound,
        within_bound=bool(r.max() <= bound + slack),
        ratios=tuple(float(v) for v in ratios),
    )


@dataclass(frozen=True)
class ValueReconstruction:
    """Recovered ``f(x0) - f_*``; ``remaining_bound`` is zero for finished flows."""

    gap: float
    partial: bool
    remaining_bound: float = 0.0

    @property
    def upper(self) -> float:
        return self.gap + self.remaining_bound


def reconstruct_value_gap(
    f: ConvexFunction,
    traj: FlowTrajectory,
    slopes: Optional[np.ndarray] = None,
) -> ValueReconstruction:
    """Integrate the squared slope along the flow.

    Along the flow ``|gamma'| = slope``, so the time integral of the squared
    slope equals the integral of the slope against arc length.  That integral
    is discretised by the trapezoidal rule on each step, using the slope at
    the step's start and the implicit-Euler speed (the slope's left limit) at
    its end.  Only slopes enter -- the function values are never used.

    ``slopes`` overrides the slopes at the trajectory points (e.g. those of
    ``f + c``, which coincide).
    """
    s = traj.slopes if slopes is None else np.asarray(slopes, dtype=float)
    steps = np.diff(traj.cum_length)
    total = float(np.sum(steps * 0.5 * (s[:-1] + traj.velocities)))
    if traj.termination in ("reached_argmin", "value_gap_reached"):
        return ValueReconstruction(total, False, 0.0)
    # convexity: f(x) - f_* <= slope(x) * d(x, C_f)
    rem = float(s[-1] * traj.dist_to_argmin[-1])
    return ValueReconstruction(total, True, rem)
