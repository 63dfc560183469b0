"""Slow brute-force references used by the tests.

None of these call into the package's solvers.
"""

import itertools

import numpy as np


def simplex_grid_min_norm(translation, gens, n_grid=24, rounds=40):
    """min |t + sum l_i g_i| over the simplex by zooming grid search.

    The weights are parametrised by the first ``k - 1`` coordinates; each round
    re-centres a grid on the best point and shrinks it by a factor of 4.
    """
    gens = np.atleast_2d(np.asarray(gens, dtype=float))
    t = np.asarray(translation, dtype=float)
    k = gens.shape[0]
    if k == 1:
        return float(np.linalg.norm(t + gens[0]))

    def value(L):
        lam = np.hstack([L, 1.0 - L.sum(axis=1, keepdims=True)])
        keep = lam.min(axis=1) >= -1e-15
        lam = np.clip(lam[keep], 0.0, None)
        return lam, np.linalg.norm(t + lam @ gens, axis=1)

    center = np.full(k - 1, 1.0 / k)
    width = 1.0
    best = np.inf
    for _ in range(rounds):
        axes = [np.linspace(c - width, c + width, n_grid + 1) for c in center]
        L = np.array(list(itertools.product(*axes))) if k > 2 else axes[0][:, None]
        L = np.clip(L, 0.0, 1.0)
        lam, vals = value(L)
        if vals.size == 0:
            break
        i = int(np.argmin(vals))
        if vals[i] <= best:
            best = float(vals[i])
            center = lam[i, :-1]
        width /= 4.0
    return best


def face_enumeration_min_norm(points):
    """Exact min-norm point of conv(points) by trying every face's affine hull."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    best, arg = np.inf, None
    for r in range(1, P.shape[0] + 1):
        for idx in itertools.combinations(range(P.shape[0]), r):
            Q = P[list(idx)]
            # min |Q^T w| s.t. sum w = 1 via the KKT system
            k = len(idx)
            K = np.zeros((k + 1, k + 1))
            K[:k, :k] = Q @ Q.T
            K[:k, k] = 1.0
            K[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            w = sol[:k]
            if np.all(w >= -1e-12) and abs(w.sum() - 1.0) < 1e-9:
                v = Q.T @ w
                nv = float(np.linalg.norm(v))
                if nv < best:
                    best, arg = nv, v
    return arg, best


def grid_minimum(func, lo, hi, n=401, rounds=6):
    """Minimum of a 2-D function over a box by repeatedly zoomed grids."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    best_x, best = None, np.inf
    for _ in range(rounds):
        xs = np.linspace(lo[0], hi[0], n)
        ys = np.linspace(lo[1], hi[1], n)
        X, Y = np.meshgrid(xs, ys)
        P = np.column_stack([X.ravel(), Y.ravel()])
        v = func(P)
        i = int(np.argmin(v))
        if v[i] < best:
            best, best_x = float(v[i]), P[i]
        span = (hi - lo) / 20.0
        lo, hi = best_x - span, best_x + span
    return best_x, best


def dykstra_projection(x, G, h, iters=20000, tol=1e-14):
    """Euclidean projection onto {y : G y <= h} by Dykstra's alternating scheme."""
    y = np.asarray(x, dtype=float).copy()
    incs = np.zeros((G.shape[0], y.shape[0]))
    for _ in range(iters):
        y_old = y.copy()
        for i, (g, b) in enumerate(zip(G, h)):
            z = y + incs[i]
            viol = g @ z - b
            p = z - (viol / (g @ g)) * g if viol > 0 else z
            incs[i] = z - p
            y = p
        if np.linalg.norm(y - y_old) < tol:
            break
    return y


def projected_gradient_qp(P, q, G, h, x0, iters=20000):
    """min 1/2 x'Px + q'x over {Gx <= h} by projected gradient with step 1/L."""
    L = max(np.linalg.eigvalsh(P).max(), 1e-12)
    x = dykstra_projection(x0, G, h)
    for _ in range(iters):
        x_new = dykstra_projection(x - (P @ x + q) / L, G, h, iters=2000)
        if np.linalg.norm(x_new - x) < 1e-13:
            x = x_new
            break
        x = x_new
    return x
