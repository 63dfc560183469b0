"""Flow length over starting distance for random instances in a few dimensions.

    python demos/length_ratios.py
"""

import numpy as np

from slopelab import integrate
from slopelab.bounds import kn_order_bound, kn_ratio
from slopelab.experiments import InstanceSpec, generate, instance_seed

for n in (1, 2, 3, 4):
    ratios = []
    for rep in range(30):
        inst = generate(InstanceSpec(n=n, family="max-affine", m=6, seed=instance_seed(5, n, rep)))
        ratios.append(kn_ratio(integrate(inst.f, inst.x)))
    r = np.array(ratios)
    print(f"n={n}: mean {r.mean():.4f}, max {r.max():.4f}, order bound {kn_order_bound(n):.3g}")
