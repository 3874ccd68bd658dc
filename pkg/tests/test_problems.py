import json

import numpy as np
import pytest

from _instances import auglag_soc, elqp_1d, elqp_2d, nlp_1d, quartic_poly
from _oracles import grid_conjugate
from tiltnewton.exceptions import ConfigInvalid, DimensionError
from tiltnewton.problems import (
    AugLagData,
    ELQPData,
    Kind,
    NLPData,
    load_problem,
    make_auglag,
    make_c11,
    make_elqp,
    make_example_4_6,
    make_nlp,
    make_norm1,
    problem_from_dict,
    problem_to_dict,
    save_problem,
)
from tiltnewton.qpsolver import project_soc
from tiltnewton.sets import PolyhedralSet, SecondOrderCone


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestELQP:
    def test_values_match_grid_conjugate(self):
        inst = elqp_1d()
        for x in (-1.0, 1.0, 0.3, -0.4):
            conj, _ = grid_conjugate(-x, 1.0)
            assert inst.value(np.array([x])) == pytest.approx(x * x + conj, abs=1e-9)

    def test_worked_values(self):
        inst = elqp_1d()
        assert inst.value(np.array([-1.0])) == pytest.approx(1.5)
        np.testing.assert_allclose(inst.gradient(np.array([-1.0])), [-3.0])
        assert inst.value(np.array([1.0])) == pytest.approx(1.0)
        np.testing.assert_allclose(inst.gradient(np.array([1.0])), [2.0])

    def test_singleton_set_gives_pure_quadratic(self):
        Q = np.array([[2.0, 0.3], [0.3, 1.0]])
        data = ELQPData(Q, [1.0, -1.0], np.eye(2), [0.5, 0.5], PolyhedralSet.singleton([0.0, 0.0]),
                        np.eye(2))
        inst = make_elqp(data)
        x = np.array([0.4, -0.7])
        assert inst.value(x) == pytest.approx(x @ [1.0, -1.0] + 0.5 * x @ Q @ x)

    def test_selections_at_kink(self):
        sel = elqp_1d().hessian_selections(np.array([0.0]))
        assert sorted(float(A[0, 0]) for A in sel) == [2.0, 3.0]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        inst = elqp_2d()
        for _ in range(200):
            x = rng.uniform(-1, 1, 2)
            np.testing.assert_allclose(inst.gradient(x), central_difference(inst.value, x),
                                       atol=1e-6)

    def test_maximizer_optimality(self):
        inst = elqp_2d()
        _, sol = inst.data.maximizer(np.array([-0.3, 0.2]))
        assert sol.kkt_residual <= 1e-10

    def test_B_must_be_positive_definite(self):
        with pytest.raises(ValueError):
            ELQPData([[1.0]], [0.0], [[1.0]], [0.0], PolyhedralSet.nonnegative_orthant(1), [[0.0]])

    def test_piecewise_c11_builder(self):
        # 1/2 x^2 + 1/2 max(0, x - 1)^2
        inst = make_c11([[1.0]], [0.0], [[1.0]], [1.0])
        assert inst.kind is Kind.PIECEWISE
        assert inst.value(np.array([3.0])) == pytest.approx(4.5 + 2.0)
        np.testing.assert_allclose(inst.gradient(np.array([3.0])), [5.0])
        np.testing.assert_allclose(inst.gradient(np.array([0.5])), [0.5])


class TestNLP:
    def test_values(self):
        inst = nlp_1d()
        assert inst.value(np.array([-1.0])) == pytest.approx(4.0)
        assert inst.value(np.array([0.5])) == np.inf
        np.testing.assert_array_equal(inst.known_solution, [0.0])

    def test_unconstrained_reduces_to_psi(self):
        data = NLPData.quadratic(2, {"P": np.eye(2), "a": [1.0, 0.0]})
        inst = make_nlp(data)
        x = np.array([3.0, -2.0])
        assert inst.value(x) == pytest.approx(0.5 * x @ x + 3.0)

    def test_subgradient_residual(self):
        inst = nlp_1d()
        # at 0 the subdifferential is -2 + [0, inf)
        assert inst.subgradient_residual(np.array([0.0]), np.array([5.0])) <= 1e-12
        assert inst.subgradient_residual(np.array([0.0]), np.array([-3.0])) == pytest.approx(1.0)
        assert inst.subgradient_residual(np.array([1.0]), np.array([0.0])) == np.inf

    def test_equality_count_validated(self):
        with pytest.raises(DimensionError):
            NLPData.quadratic(1, {"P": [[1.0]]}, [{"a": [1.0]}], s=2)


class TestAugLag:
    def scalar(self):
        data = AugLagData.quadratic(1, {"P": [[2.0]]}, [{"a": [1.0]}],
                                    PolyhedralSet.nonpositive_orthant(1), [0.0], 1.0)
        return make_auglag(data)

    def test_worked_values(self):
        inst = self.scalar()
        assert inst.value(np.array([3.0])) == pytest.approx(13.5)
        np.testing.assert_allclose(inst.gradient(np.array([3.0])), [9.0])
        assert inst.value(np.array([-1.0])) == pytest.approx(1.0)
        np.testing.assert_allclose(inst.gradient(np.array([-1.0])), [-2.0])

    def test_soc_polar_point(self):
        data = AugLagData.quadratic(3, {"P": np.zeros((3, 3))},
                                    [{"a": row} for row in np.eye(3)],
                                    SecondOrderCone(3), [0.0, 0.0, 0.0], 2.0)
        inst = make_auglag(data)
        assert inst.value(np.array([0.0, 0.0, -1.0])) == pytest.approx(1.0)

    def test_matches_independent_distance_formula(self):
        inst = auglag_soc()
        lam, rho = np.array([1.0, 0.0, -1.0]), 1.0
        rng = np.random.default_rng(3)
        for _ in range(300):
            x = rng.uniform(-2, 2, 3)
            z = x + lam / rho
            p = project_soc(z)
            val = 0.5 * np.sum((x - [2, 0, 0]) ** 2) + 0.5 * rho * np.sum((z - p) ** 2) \
                - 0.5 * lam @ lam / rho
            grad = (x - [2, 0, 0]) + rho * (z - p)
            assert abs(inst.value(x) - val) <= 1e-10
            np.testing.assert_allclose(inst.gradient(x), grad, atol=1e-10)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        inst = auglag_soc()
        for _ in range(100):
            x = rng.uniform(-2, 2, 3)
            np.testing.assert_allclose(inst.gradient(x), central_difference(inst.value, x),
                                       atol=1e-6)


class TestExample46:
    def test_gradient_and_selection(self):
        inst = make_example_4_6()
        x = np.array([1 / (2 * np.pi)])
        np.testing.assert_allclose(inst.gradient(x), [1 / np.pi], rtol=1e-14)
        np.testing.assert_allclose(inst.hessian_selections(x)[0], [[1.0]], rtol=1e-12)

    def test_selection_set_at_zero(self):
        sel = make_example_4_6().hessian_selections(np.array([0.0]))
        assert sorted(float(A[0, 0]) for A in sel) == [1.0, 3.0]

    def test_start_point(self):
        inst = make_example_4_6(alpha=2.0)
        assert float(inst.start[0]) == pytest.approx(1 / (4 * np.pi))

    def test_value_derivative_is_gradient(self):
        inst = make_example_4_6()
        for x in (0.3, -0.05, 0.011):
            fd = (inst.value(np.array([x + 1e-6])) - inst.value(np.array([x - 1e-6]))) / 2e-6
            assert fd == pytest.approx(float(inst.gradient(np.array([x]))[0]), abs=1e-7)

    def test_extended_precision_gradient(self):
        import mpmath

        inst = make_example_4_6(precision=50)
        with mpmath.workdps(50):
            g = inst.gradient(inst.start)
            assert abs(g[0] - 2 * inst.start[0]) < mpmath.mpf(10) ** -45


class TestNorm1:
    def test_prox_soft_threshold(self):
        inst = make_norm1(2)
        np.testing.assert_allclose(inst.prox(np.array([2.0, -0.3]), 1.0), [1.0, 0.0])


class TestSerialization:
    @pytest.mark.parametrize("build", [elqp_1d, elqp_2d, nlp_1d, auglag_soc, quartic_poly])
    def test_round_trip(self, build, tmp_path):
        inst = build()
        path = tmp_path / "p.json"
        save_problem(inst, path)
        back = load_problem(path)
        assert back.kind is inst.kind
        assert problem_to_dict(back) == problem_to_dict(inst)
        x = np.full(inst.n, 0.37)
        assert back.value(x) == inst.value(x)

    def test_example46_round_trip(self):
        d = problem_to_dict(make_example_4_6(alpha=1.5))
        assert problem_from_dict(d).spec == d

    def test_invalid_field_reports_path(self):
        with pytest.raises(ConfigInvalid, match="Q"):
            problem_from_dict({"kind": "ELQP", "Q": "oops", "q": [0], "A": [[1]], "b": [0],
                               "C": {"type": "box", "lower": [0], "upper": [None]}, "B": [[1]]})

    def test_missing_field(self):
        with pytest.raises(ConfigInvalid):
            problem_from_dict({"kind": "NLP", "n": 1})

    def test_bad_json_line_number(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "kind": "SmoothC2",\n  "Q": [[1]]\n  "b": [0]\n}')
        with pytest.raises(ConfigInvalid, match="line 4"):
            load_problem(path)

    def test_box_nulls_are_infinite(self):
        inst = problem_from_dict(json.loads(json.dumps({
            "kind": "ELQP", "Q": [[2.0]], "q": [0.0], "A": [[1.0]], "b": [0.0],
            "C": {"type": "box", "lower": [0.0], "upper": [None]}, "B": [[1.0]]})))
        assert inst.value(np.array([-1.0])) == pytest.approx(1.5)
