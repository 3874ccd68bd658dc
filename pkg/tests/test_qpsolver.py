import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import dual_cone_qp_batch, grid_soc_projection
from tiltnewton.exceptions import Infeasible, QPUnbounded
from tiltnewton.qpsolver import (
    ConeQP,
    QPStatus,
    conjugate_maximizer,
    project_polyhedral,
    project_soc,
    require_optimal,
    solve_cone_qp,
    solve_qp,
)
from tiltnewton.sets import ConeRep, PolyhedralSet


class TestConeQPExamples:
    def test_unconstrained_newton_step(self):
        sol = solve_cone_qp(ConeQP(np.eye(2), [-1.0, -1.0], ConeRep.whole(2)))
        assert sol.status is QPStatus.OPTIMAL
        np.testing.assert_allclose(sol.w, [1.0, 1.0])

    def test_active_bound_multiplier(self):
        sol = solve_cone_qp(ConeQP(np.eye(1), [-1.0], ConeRep(1, ineq=[[1.0]])))
        np.testing.assert_allclose(sol.w, [0.0], atol=1e-15)
        np.testing.assert_allclose(sol.multipliers, [1.0])
        assert list(sol.active) == [0]

    def test_equality_elimination(self):
        sol = solve_cone_qp(ConeQP(np.diag([2.0, 2.0]), [-2.0, 0.0], ConeRep(2, eq=[[1.0, 0.0]])))
        np.testing.assert_allclose(sol.w, [0.0, 0.0], atol=1e-15)

    def test_unbounded_direction(self):
        sol = solve_cone_qp(ConeQP(np.diag([1.0, -1.0]), [0.0, -1.0], ConeRep.whole(2)))
        assert sol.status is QPStatus.UNBOUNDED
        with pytest.raises(QPUnbounded):
            require_optimal(sol)

    def test_psd_on_cone_is_bounded(self):
        # indefinite overall but positive definite on {w2 = 0}
        sol = solve_cone_qp(ConeQP(np.diag([1.0, -1.0]), [-1.0, 0.0], ConeRep(2, eq=[[0.0, 1.0]])))
        assert sol.status is QPStatus.OPTIMAL
        np.testing.assert_allclose(sol.w, [1.0, 0.0])

    def test_deterministic_active_set_path(self):
        rng = np.random.default_rng(5)
        M = rng.standard_normal((4, 4))
        qp = ConeQP(M.T @ M + np.eye(4), rng.standard_normal(4), ConeRep(4, ineq=rng.standard_normal((6, 4))))
        a, b = solve_cone_qp(qp), solve_cone_qp(qp)
        assert a.iterations == b.iterations
        assert a.w.tobytes() == b.w.tobytes()

    def test_degenerate_duplicate_rows(self):
        qp = ConeQP(np.eye(2), [-1.0, -1.0], ConeRep(2, ineq=[[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
        sol = solve_cone_qp(qp)
        assert sol.status is QPStatus.OPTIMAL
        np.testing.assert_allclose(sol.w, [0.0, 1.0], atol=1e-14)


class TestGeneralQP:
    def test_infeasible_constraints(self):
        with pytest.raises(Infeasible):
            solve_qp(np.eye(1), [0.0], A_in=[[1.0], [-1.0]], b_in=[-1.0, -1.0])

    def test_shifted_constraints_match_closed_form(self):
        # min 1/2|x|^2 - x1 s.t. x1 + x2 = 2
        sol = solve_qp(np.eye(2), [-1.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[2.0])
        np.testing.assert_allclose(sol.w, [1.5, 0.5])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_kkt_residual_small(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        M = rng.standard_normal((n, n))
        H = M.T @ M + np.eye(n)
        A_in = rng.standard_normal((int(rng.integers(0, 7)), n))
        b_in = rng.random(A_in.shape[0])
        sol = solve_qp(H, rng.standard_normal(n), A_in=A_in, b_in=b_in)
        assert sol.status is QPStatus.OPTIMAL
        assert sol.kkt_residual <= 1e-10
        assert np.all(A_in @ sol.w <= b_in + 1e-10)


class TestProjections:
    def test_onto_nonpositive_reals(self):
        np.testing.assert_allclose(project_polyhedral(PolyhedralSet.nonpositive_orthant(1), [3.0]), [0.0])

    def test_onto_box(self):
        box = PolyhedralSet.box([0.0, 0.0], [1.0, 1.0])
        np.testing.assert_allclose(project_polyhedral(box, [2.0, 0.5]), [1.0, 0.5])

    def test_feasible_point_unchanged(self):
        C = PolyhedralSet(2, G=[[1.0, 1.0]], h=[1.0])
        np.testing.assert_array_equal(project_polyhedral(C, [0.2, 0.3]), [0.2, 0.3])

    def test_general_polyhedron(self):
        C = PolyhedralSet(2, G=[[1.0, 1.0]], h=[1.0])
        np.testing.assert_allclose(project_polyhedral(C, [1.0, 1.0]), [0.5, 0.5])

    def test_soc_branches(self):
        np.testing.assert_array_equal(project_soc([0.3, 0.4, 0.5]), [0.3, 0.4, 0.5])
        np.testing.assert_array_equal(project_soc([0.3, 0.4, -0.5]), [0.0, 0.0, 0.0])
        np.testing.assert_allclose(project_soc([1.0, 0.0, 0.0]), [0.5, 0.0, 0.5])

    def test_soc_against_grid(self):
        z = np.array([1.0, 0.0, 0.0])
        ref = grid_soc_projection(z)
        np.testing.assert_allclose(project_soc(z), ref, atol=2e-3)
        z = np.array([0.7, -1.1, 0.4])
        p = project_soc(z)
        assert np.linalg.norm(p - z) <= np.linalg.norm(grid_soc_projection(z) - z) + 1e-12

    def test_conjugate_maximizer_clips(self):
        sol = conjugate_maximizer(PolyhedralSet.nonnegative_orthant(1), np.eye(1), [-1.0])
        np.testing.assert_allclose(sol.w, [0.0])
        sol = conjugate_maximizer(PolyhedralSet.nonnegative_orthant(1), np.eye(1), [2.0])
        np.testing.assert_allclose(sol.w, [2.0])


def test_random_qps_match_dual_reference():
    rng = np.random.default_rng(11)
    N, nmax, rmax = 100, 5, 6
    H, g, E, G, ours = [], [], [], [], []
    for _ in range(N):
        n = int(rng.integers(1, nmax + 1))
        me = int(rng.integers(0, min(n, 2)))
        mi = int(rng.integers(0, rmax - me + 1))
        M = rng.standard_normal((n, n))
        Hn, gn = M.T @ M + np.eye(n), rng.standard_normal(n)
        En, Gn = rng.standard_normal((me, n)), rng.standard_normal((mi, n))
        sol = solve_cone_qp(ConeQP(Hn, gn, ConeRep(n, En, Gn)))
        assert sol.status is QPStatus.OPTIMAL and sol.kkt_residual <= 1e-10
        ours.append(sol.objective)
        Hp = np.eye(nmax)
        Hp[:n, :n] = Hn
        gp = np.zeros(nmax)
        gp[:n] = gn
        Ep = np.zeros((1, nmax))
        Ep[:me, :n] = En
        Gp = np.zeros((rmax, nmax))
        Gp[:mi, :n] = Gn
        H.append(Hp), g.append(gp), E.append(Ep), G.append(Gp)
    ref = dual_cone_qp_batch(np.array(H), np.array(g), np.array(E), np.array(G))
    np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-8)
