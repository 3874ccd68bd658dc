import numpy as np
import pytest

from _instances import auglag_soc, elqp_1d, elqp_2d, nlp_1d, nlp_disk
from _oracles import dual_cone_qp_batch
from tiltnewton import secondorder as so
from tiltnewton.exceptions import (
    DegenerateMultipliers,
    MultiplierInfeasible,
    NotInGraph,
    NotMember,
    NotNormal,
)
from tiltnewton.problems import AugLagData, NLPData, make_auglag, make_nlp, make_quadratic
from tiltnewton.sets import ConeRep, PolyhedralSet, SecondOrderCone


class TestTangentCone:
    def test_orthant_boundary(self):
        T = so.tangent_cone(PolyhedralSet.nonnegative_orthant(2), [0.0, 1.0])
        assert T.contains([1.0, -5.0]) and not T.contains([-1e-6, 0.0])

    def test_interior_point(self):
        T = so.tangent_cone(PolyhedralSet.nonnegative_orthant(2), [1.0, 1.0])
        assert T.ineq.shape[0] == 0 and T.eq.shape[0] == 0

    def test_singleton(self):
        T = so.tangent_cone(PolyhedralSet.singleton([0.0]), [0.0])
        assert T.contains([0.0]) and not T.contains([1e-6])

    def test_outside_point(self):
        with pytest.raises(NotMember):
            so.tangent_cone(PolyhedralSet.nonnegative_orthant(1), [-1.0])


class TestCriticalConePolyhedral:
    C2 = PolyhedralSet.nonnegative_orthant(2)

    def test_orthant_case(self):
        K = so.critical_cone_polyhedral(self.C2, [0.0, 1.0], [-1.0, 0.0])
        assert K.contains([0.0, 3.0]) and K.contains([0.0, -3.0])
        assert not K.contains([1e-6, 0.0])

    def test_zero_normal_gives_tangent_cone(self):
        K = so.critical_cone_polyhedral(self.C2, [0.0, 1.0], [0.0, 0.0])
        assert K.contains([1.0, -1.0]) and not K.contains([-1.0, 0.0])

    def test_interior_point_of_half_line(self):
        K = so.critical_cone_polyhedral(PolyhedralSet.nonnegative_orthant(1), [1.0], [0.0])
        # brute force over signed directions
        for w in (-2.0, -1e-3, 0.0, 1e-3, 2.0):
            assert K.contains([w])

    def test_non_normal_vector(self):
        with pytest.raises(NotNormal):
            so.critical_cone_polyhedral(self.C2, [0.0, 1.0], [1.0, 0.0])


class TestSOCCriticalCone:
    def test_interior(self):
        K = so.soc_critical_cone([0.1, 0.0, 1.0], [0.0, 0.0, 0.0])
        assert isinstance(K, ConeRep) and K.contains([5.0, -3.0, -9.0])

    def test_polar_interior_gives_origin(self):
        K = so.soc_critical_cone([0.0, 0.0, 0.0], [0.0, 0.0, -1.0])
        assert K.contains([0.0, 0.0, 0.0])
        # brute force: Q meets the plane orthogonal to mu only at the origin
        rng = np.random.default_rng(0)
        for _ in range(200):
            w = np.append(rng.standard_normal(2), 0.0)
            in_Q = np.linalg.norm(w[:2]) <= w[2]
            assert K.contains(w) == in_Q

    def test_polar_boundary_gives_ray(self):
        K = so.soc_critical_cone([0.0, 0.0, 0.0], [1.0, 0.0, -1.0])
        assert K.contains([1.0, 0.0, 1.0]) and K.contains([3.0, 0.0, 3.0])
        assert not K.contains([-1.0, 0.0, -1.0]) and not K.contains([0.0, 1.0, 1.0])

    def test_both_zero(self):
        assert isinstance(so.soc_critical_cone(np.zeros(3), np.zeros(3)), SecondOrderCone)

    def test_boundary_with_normal(self):
        z, mu = np.array([1.0, 0.0, 1.0]), np.array([1.0, 0.0, -1.0])
        K = so.soc_critical_cone(z, mu)
        assert K.contains([1.0, 7.0, 1.0]) and not K.contains([1.0, 0.0, 0.0])

    def test_boundary_without_normal(self):
        K = so.soc_critical_cone([1.0, 0.0, 1.0], np.zeros(3))
        assert K.contains([0.0, 1.0, 0.0]) and K.contains([-1.0, 0.0, 0.0])
        assert not K.contains([1.0, 0.0, 0.0])

    def test_not_in_graph(self):
        with pytest.raises(NotInGraph):
            so.soc_critical_cone([0.1, 0.0, 1.0], [0.0, 0.0, -1.0])


class TestSOCJacobians:
    @pytest.mark.parametrize("y", [[0.3, -0.2, 1.0], [1.0, 0.5, -3.0], [1.0, 0.0, 0.2],
                                   [0.4, -0.8, 0.1]])
    def test_single_piece_matches_finite_differences(self, y):
        from tiltnewton.qpsolver import project_soc

        y = np.array(y)
        jacs = so.soc_projection_jacobians(y)
        assert len(jacs) == 1
        h = 1e-7
        fd = np.column_stack([(project_soc(y + h * e) - project_soc(y - h * e)) / (2 * h)
                              for e in np.eye(3)])
        np.testing.assert_allclose(jacs[0], fd, atol=1e-6)

    def test_boundary_lists_both_pieces(self):
        assert len(so.soc_projection_jacobians([1.0, 0.0, 1.0])) == 2
        assert len(so.soc_projection_jacobians([0.0, 0.0, 0.0])) == 3


class TestMultipliers:
    def test_active_constraint(self):
        res = so.lagrange_multipliers(nlp_1d().data, [0.0], [2.0])
        np.testing.assert_allclose(res.lam, [2.0])
        assert res.unique

    def test_inactive_constraint(self):
        res = so.lagrange_multipliers(nlp_1d().data, [-1.0], [0.0])
        np.testing.assert_array_equal(res.lam, [0.0])

    def test_duplicate_constraints_least_norm(self):
        data = NLPData.quadratic(1, {"P": [[2.0]], "a": [-2.0]}, [{"a": [1.0]}, {"a": [1.0]}])
        res = so.lagrange_multipliers(data, [0.0], [2.0])
        assert not res.unique
        np.testing.assert_allclose(res.lam, [1.0, 1.0], atol=1e-10)
        verts = so.vertex_multipliers(data, [0.0], [2.0])
        assert sorted(tuple(np.round(v, 12)) for v in verts) == [(0.0, 2.0), (2.0, 0.0)]

    def test_wrong_sign_is_infeasible(self):
        with pytest.raises(MultiplierInfeasible):
            so.lagrange_multipliers(nlp_1d().data, [0.0], [-2.0])

    def test_unbounded_multiplier_set(self):
        # x <= 0 and -x <= 0 at x = 0: lam1 - lam2 = v has a recession direction
        data = NLPData.quadratic(1, {"P": [[1.0]]}, [{"a": [1.0]}, {"a": [-1.0]}])
        with pytest.raises(DegenerateMultipliers):
            so.vertex_multipliers(data, [0.0], [1.0])


class TestIndexSets:
    def test_mixed(self):
        sets = so.index_sets([0.0, 0.0, -1.0], [5.0, 0.0, 0.0], 1)
        assert sets.I == {1} and sets.I_plus == set()

    def test_strong(self):
        sets = so.index_sets([0.0, 0.0], [0.0, 3.0], 0)
        assert sets.I == {0, 1} and sets.I_plus == {1}

    def test_all_inactive(self):
        assert so.index_sets([-1.0, -2.0], [0.0, 0.0], 0).I == set()


class TestSecondSubderivatives:
    def test_elqp_branches(self):
        data = elqp_1d().data
        for w in (-2.0, 0.5, 1.0):
            assert so.second_subderivative_elqp(data, [-1.0], [w]) == pytest.approx(3 * w * w)
            assert so.second_subderivative_elqp(data, [1.0], [w]) == pytest.approx(2 * w * w)
        assert so.second_subderivative_elqp(data, [1.0], [0.0]) == 0.0

    def test_elqp_kink_is_max_of_pieces(self):
        data = elqp_1d().data
        assert so.second_subderivative_elqp(data, [0.0], [1.0]) == pytest.approx(2.0)
        assert so.second_subderivative_elqp(data, [0.0], [-1.0]) == pytest.approx(3.0)

    def test_constrained_strongly_active(self):
        data = nlp_1d().data
        assert so.second_subderivative_constrained(data, [0.0], [0.0], [0.0]) == 0.0
        for w in (1.0, -1.0, 1e-3):
            assert so.second_subderivative_constrained(data, [0.0], [0.0], [w]) == np.inf

    def test_constrained_inactive(self):
        data = nlp_1d().data
        v = data.psi_grad(np.array([-1.0]))
        assert so.second_subderivative_constrained(data, [-1.0], v, [3.0]) == pytest.approx(18.0)

    def test_domain_is_tangent_cone_cap_normal_hyperplane(self):
        data = nlp_disk().data
        x = np.array([1.0, 0.0])
        for lam, expect_free in ((0.0, True), (1.0, False)):
            v = data.psi_grad(x) + lam * 2 * x
            dom = so.nlp_form(data, x, v).domain()
            assert dom.contains([0.0, 1.0]) and dom.contains([0.0, -1.0])
            assert dom.contains([-1.0, 0.0]) == expect_free
            assert not dom.contains([1.0, 0.0])

    def test_homogeneity(self):
        rng = np.random.default_rng(0)
        forms = [so.elqp_form(elqp_2d().data, [0.1, -0.2]),
                 so.auglag_form(auglag_soc().data, [1.0, 0.0, 1.0])]
        for form in forms:
            for _ in range(20):
                w = rng.standard_normal(form.n)
                t = rng.uniform(0.1, 5.0)
                assert form.evaluate(t * w) == pytest.approx(t * t * form.evaluate(w), rel=1e-10)

    def test_lower_bound_with_prox_regularity_constant(self):
        # concave objective over the unit disk: rho = 1
        data = NLPData.quadratic(2, {"P": -np.eye(2)}, [{"P": 2 * np.eye(2), "c": -1.0}])
        rng = np.random.default_rng(2)
        for _ in range(200):
            th = rng.uniform(0, 2 * np.pi)
            x = np.array([np.cos(th), np.sin(th)])
            lam = rng.uniform(0, 3)
            v = data.psi_grad(x) + lam * 2 * x
            w = rng.standard_normal(2)
            assert so.second_subderivative_constrained(data, x, v, w) >= -w @ w - 1e-12

    def test_auglag_polyhedral_kink(self):
        data = AugLagData.quadratic(1, {"P": [[1.0]]}, [{"a": [1.0]}],
                                    PolyhedralSet.nonpositive_orthant(1), [0.0], 2.0)
        form = make_auglag(data).form(np.array([0.0]), np.array([0.0]))
        assert form.evaluate([1.0]) == pytest.approx(3.0)
        assert form.evaluate([-1.0]) == pytest.approx(1.0)


class TestFiniteDifferenceQuotient:
    def test_quadratic_exact(self):
        inst = make_quadratic([[1.0]])
        for t in (1.0, 1e-2, 1e-4):
            assert so.fd_second_quotient(inst, [1.0], [1.0], [1.0], t) == pytest.approx(1.0)

    def test_elqp_left_branch(self):
        inst = elqp_1d()
        v = inst.gradient(np.array([-1.0]))
        assert so.fd_second_quotient(inst, [-1.0], v, [1.0]) == pytest.approx(3.0, abs=1e-3)

    def test_indicator_infeasible_step(self):
        inst = make_nlp(NLPData.quadratic(1, {"P": [[0.0]]}, [{"a": [1.0]}]))
        assert so.fd_second_quotient(inst, [0.0], [1.0], [1.0]) == np.inf


class TestModelSteps:
    def test_elqp_model_step(self):
        inst = elqp_1d()
        x = np.array([-1.0])
        v = inst.gradient(x)
        np.testing.assert_allclose(inst.form(x, v).model_step(v), [1.0])

    def test_zero_gradient_gives_zero_step(self):
        inst = elqp_2d()
        x = np.zeros(2)
        np.testing.assert_allclose(inst.form(x, np.zeros(2)).model_step(np.zeros(2)), 0.0,
                                   atol=1e-15)

    def test_reduced_nlp_qp_matches_dual_reference(self):
        inst = nlp_disk()
        data = inst.data
        rng = np.random.default_rng(4)
        H, g, E, G, ours = [], [], [], [], []
        for _ in range(30):
            th = rng.uniform(0, 2 * np.pi)
            x = np.array([np.cos(th), np.sin(th)])
            lam = rng.uniform(0, 2) * (rng.random() < 0.7)
            v = data.psi_grad(x) + lam * 2 * x
            form = so.nlp_form(data, x, v)
            qp, n = form.model_qp(v)
            w = form.model_step(v)
            ours.append(float(v @ w + 0.5 * w @ qp.H @ w))
            dom = form.domain()
            Ep, Gp = np.zeros((2, 2)), np.zeros((2, 2))
            Ep[:dom.eq.shape[0]] = dom.eq
            Gp[:dom.ineq.shape[0]] = dom.ineq
            H.append(qp.H), g.append(v), E.append(Ep), G.append(Gp)
        ref = dual_cone_qp_batch(np.array(H), np.array(g), np.array(E), np.array(G))
        np.testing.assert_allclose(ours, ref, atol=1e-9)
