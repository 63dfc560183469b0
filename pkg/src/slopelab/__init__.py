"""Convex functions determined by their slopes: flows, length bounds and stability checks."""

from .config import DEFAULT_TOLERANCES, Tolerances
from .convex_core import (
    ArgminDescription,
    ArgminUnboundedError,
    ConvexFunction,
    argmin,
    dist_to_argmin,
    evaluate,
    max_affine,
    min_norm_subgradient,
    project_argmin,
    prox,
    quadratic,
    slope,
    subdifferential,
)
from .minnorm_qp import (
    InfeasibleError,
    NonConvergenceError,
    SolverError,
    UnboundedError,
    min_norm_point,
    solve_qp,
)
from .flow import FlowOptions, FlowTrajectory, check_properties, integrate
from .bounds import kn_order_bound, kn_ratio, kn_ratio_study, lemma1_certificate, reconstruct_value_gap
from .stability import (
    DeviationReport,
    VerifyOptions,
    corollary_check,
    one_sided_sup,
    slope_deviation,
    theorem_rhs,
    verify_instance,
)

__version__ = "0.1.0"
