"""Central tolerance record shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances with their default values.

    Attributes
    ----------
    tol_argmin : float
        Distance below which a point counts as a member of the argmin set.
    tol_qp : float
        Feasibility / stationarity tolerance of the active-set QP solver.
    eps_active_rel : float
        Relative activation slack: piece ``i`` is active at ``x`` when its value
        is within ``eps_active_rel * (1 + |max value|)`` of the maximum.
    tol_wolfe : float
        Optimality tolerance of the min-norm point iteration.
    cert_slack : float
        Slack applied (times the instance scale) to every certified inequality.
    slack_scale : float
        Global multiplier on ``cert_slack``; the CLI ``--tol-scale`` sets it.
    """

    tol_argmin: float = 1e-8
    tol_qp: float = 1e-10
    eps_active_rel: float = 1e-9
    tol_wolfe: float = 1e-12
    cert_slack: float = 1e-6
    slack_scale: float = 1.0

    def eps_active(self, max_value: float) -> float:
        return self.eps_active_rel * (1.0 + abs(max_value))

    def slack(self, scale: float) -> float:
        return self.cert_slack * self.slack_scale * scale

    def with_overrides(self, **kwargs) -> "Tolerances":
        return replace(self, **kwargs)


DEFAULT_TOLERANCES = Tolerances()
