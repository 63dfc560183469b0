import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slopelab.minnorm_qp import (
    InfeasibleError,
    NonConvergenceError,
    Polytope,
    QpProblem,
    SolverError,
    UnboundedError,
    kkt_residuals,
    min_norm_point,
    min_norm_weights,
    project_polyhedron,
    solve_lp,
    solve_qp,
)
from oracles import face_enumeration_min_norm, projected_gradient_qp, simplex_grid_min_norm


def wolfe_gap(points, v):
    # optimality: <v, p - v> >= 0 for every generator p
    return float(np.min((points - v) @ v))


class TestMinNormPoint:
    def test_symmetric_pair(self):
        v, nv = min_norm_point(Polytope([[1.0, 0.0], [-1.0, 0.0]]))
        np.testing.assert_allclose(v, 0.0, atol=1e-15)
        assert nv == pytest.approx(0.0, abs=1e-15)

    def test_single_generator(self):
        v, nv = min_norm_point(Polytope([[3.0, -4.0]]))
        np.testing.assert_allclose(v, [3.0, -4.0])
        assert nv == pytest.approx(5.0)

    def test_triangle(self):
        pts = np.array([[2.0, 1.0], [1.0, 2.0], [2.0, 2.0]])
        v, nv = min_norm_point(Polytope(pts))
        np.testing.assert_allclose(v, [1.5, 1.5], atol=1e-12)
        assert nv == pytest.approx(np.sqrt(4.5), abs=1e-12)
        # independent references
        v_face, n_face = face_enumeration_min_norm(pts)
        np.testing.assert_allclose(v, v_face, atol=1e-12)
        assert nv == pytest.approx(simplex_grid_min_norm(np.zeros(2), pts), abs=1e-9)

    def test_translation(self):
        v, _ = min_norm_point(Polytope([[1.0, 0.0], [-1.0, 0.0]], translation=[0.0, 2.0]))
        np.testing.assert_allclose(v, [0.0, 2.0], atol=1e-14)

    def test_weights_on_simplex(self, rng):
        p = Polytope(rng.normal(size=(7, 3)), translation=rng.normal(size=3))
        v, w = min_norm_weights(p)
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(w @ p.points, v, atol=1e-12)

    def test_random_against_face_enumeration(self, rng):
        for _ in range(50):
            k, n = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            pts = rng.normal(size=(k, n)) + rng.normal(size=n)
            v, nv = min_norm_point(Polytope(pts))
            _, n_ref = face_enumeration_min_norm(pts)
            assert nv == pytest.approx(n_ref, abs=1e-10)
            assert wolfe_gap(pts, v) >= -1e-10

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_and_duplication_invariance(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(int(rng.integers(1, 8)), int(rng.integers(1, 5))))
        v, _ = min_norm_point(Polytope(pts))
        v_perm, _ = min_norm_point(Polytope(pts[rng.permutation(len(pts))]))
        v_dup, _ = min_norm_point(Polytope(np.vstack([pts, pts[:2]])))
        np.testing.assert_allclose(v_perm, v, atol=1e-10)
        np.testing.assert_allclose(v_dup, v, atol=1e-10)
        assert wolfe_gap(pts, v) >= -1e-10

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Polytope(np.zeros((0, 2)))

    def test_iteration_cap_surfaces(self, rng):
        with pytest.raises(NonConvergenceError) as err:
            min_norm_weights(Polytope(rng.normal(size=(20, 6))), max_iter=1)
        diag = json.loads(err.value.to_json())
        assert diag["error"] == "NonConvergenceError"
        assert len(diag["best_iterate"]) == 6 and diag["residual"] > 0


class TestSolveQp:
    def test_single_active_constraint(self):
        prob = QpProblem(P=2 * np.eye(3), q=np.zeros(3), G=np.array([[-1.0, 0, 0]]), h=np.array([-1.0]))
        sol = solve_qp(prob)
        np.testing.assert_allclose(sol.x, [1.0, 0.0, 0.0], atol=1e-12)
        res = kkt_residuals(prob, sol)
        assert max(res.values()) <= 1e-8

    def test_unconstrained_identity(self):
        q = np.array([1.0, -2.0, 0.5])
        sol = solve_qp(QpProblem(P=np.eye(3), q=q))
        np.testing.assert_allclose(sol.x, -q, atol=1e-12)

    def test_equality_constraint(self):
        # min |x|^2 s.t. x1 + x2 = 2
        prob = QpProblem(P=2 * np.eye(2), q=np.zeros(2), E=np.array([[1.0, 1.0]]), e=np.array([2.0]))
        np.testing.assert_allclose(solve_qp(prob).x, [1.0, 1.0], atol=1e-12)

    def test_linear_program(self):
        # P = 0: min -x1 - x2 over the simplex-like box
        G = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
        h = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
        sol = solve_qp(QpProblem(P=np.zeros((2, 2)), q=np.array([-1.0, -1.0]), G=G, h=h))
        np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-10)

    def test_random_against_projected_gradient(self, rng):
        for _ in range(10):
            M = rng.normal(size=(3, 3))
            P = M @ M.T + 0.5 * np.eye(3)
            q = rng.normal(size=3)
            G = rng.normal(size=(5, 3))
            x_feas = rng.normal(size=3)
            h = G @ x_feas + rng.uniform(0.1, 1.0, size=5)
            prob = QpProblem(P=P, q=q, G=G, h=h)
            sol = solve_qp(prob)
            ref = projected_gradient_qp(P, q, G, h, x_feas)
            assert prob.objective(sol.x) == pytest.approx(prob.objective(ref), abs=1e-6)
            assert max(kkt_residuals(prob, sol).values()) <= 1e-8 * (1 + np.abs(q).max())
            # never worse than random feasible points
            Z = x_feas + 0.3 * rng.normal(size=(100, 3))
            Z = Z[np.all(Z @ G.T <= h, axis=1)]
            assert all(prob.objective(sol.x) <= prob.objective(z) + 1e-12 for z in Z)

    def test_infeasible(self):
        G = np.array([[1.0], [-1.0]])
        h = np.array([-1.0, -1.0])  # x <= -1 and x >= 1
        with pytest.raises(InfeasibleError):
            solve_qp(QpProblem(P=np.eye(1), q=np.zeros(1), G=G, h=h))

    def test_unbounded_lp(self):
        with pytest.raises(UnboundedError):
            solve_qp(QpProblem(P=np.zeros((1, 1)), q=np.array([1.0])))

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            QpProblem(P=np.eye(2), q=np.zeros(3))
        with pytest.raises(ValueError):
            QpProblem(P=np.array([[1.0, 2.0], [0.0, 1.0]]), q=np.zeros(2))

    def test_warm_start_same_answer(self, rng):
        G = rng.normal(size=(6, 2))
        h = np.abs(rng.normal(size=6)) + 0.1
        prob = QpProblem(P=np.eye(2), q=rng.normal(size=2) * 5, G=G, h=h)
        cold = solve_qp(prob)
        warm = solve_qp(prob, x0=np.zeros(2), working_set=list(cold.active))
        np.testing.assert_allclose(warm.x, cold.x, atol=1e-10)


class TestLpAndProjection:
    def test_lp(self):
        x = solve_lp(np.array([1.0, 1.0]), G=-np.eye(2), h=np.array([-1.0, -2.0]))
        np.testing.assert_allclose(x, [1.0, 2.0])

    def test_lp_infeasible(self):
        with pytest.raises(InfeasibleError):
            solve_lp(np.zeros(1), G=np.array([[1.0], [-1.0]]), h=np.array([-1.0, -1.0]))

    def test_projection_interval(self):
        G, h = np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
        np.testing.assert_allclose(project_polyhedron(np.array([3.0]), G, h), [1.0])

    def test_projection_idempotent(self, rng):
        G = rng.normal(size=(5, 3))
        h = np.abs(rng.normal(size=5)) + 0.2
        for _ in range(10):
            y = project_polyhedron(rng.normal(size=3) * 4, G, h)
            np.testing.assert_allclose(project_polyhedron(y, G, h), y, atol=1e-10)

    def test_solver_errors_share_base(self):
        assert issubclass(InfeasibleError, SolverError) and issubclass(UnboundedError, SolverError)
