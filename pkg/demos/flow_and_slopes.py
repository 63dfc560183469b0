"""Follow the subgradient flow of a small nonsmooth function.

Prints the trajectory summary, the monotonicity report, and the value gap
recovered from slopes alone.

    python demos/flow_and_slopes.py
"""

import numpy as np

from slopelab import (
    argmin,
    check_properties,
    evaluate,
    integrate,
    max_affine,
    reconstruct_value_gap,
)
from slopelab.convex_core import ConvexFunction

# 1/2 |x - c|^2 restricted in one direction, plus a max of three planes
A = np.diag([1.0, 0.0])
f = ConvexFunction(A, np.array([1.0, 0.0]), np.array([[1.0, 2.0], [-1.0, 0.5], [0.0, -1.0]]),
                   np.array([0.0, -1.0, -0.5]), 0.0)
x0 = np.array([3.0, 2.5])

traj = integrate(f, x0)
desc = argmin(f)
print(f"min value {desc.min_value:.6f}, argmin witness {desc.witness}")
print(f"{len(traj)} points, termination {traj.termination}, length {traj.total_length:.6f}")
print(f"distance to argmin: {traj.dist_to_argmin[0]:.6f} -> {traj.dist_to_argmin[-1]:.2e}")

rep = check_properties(traj)
print(f"monotonicity checks {'ok' if rep.ok() else 'violated'} "
      f"(largest slope increase {rep.p1_slope[0]:.1e})")

rec = reconstruct_value_gap(f, traj)
true_gap = evaluate(f, x0) - desc.min_value
print(f"gap from slopes {rec.gap:.8f}, true gap {true_gap:.8f}")

# the same slopes for a one-dimensional kink: |x| from 2 travels exactly 2
g = max_affine([[1.0], [-1.0]], [0.0, 0.0])
t = integrate(g, [2.0])
print(f"|x| from 2: arrival time {t.times[-1]:.6f}, length {t.total_length:.6f}")
