import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from penaltyvi.geometry import SpaceSpec, dual_norm, norm
from penaltyvi.operators import (
    DomainError,
    MonotoneOp,
    MonotonicityModulus,
    OperatorPerturbation,
    RhsPerturbation,
    check_lemma2_bound,
    check_monotonicity,
    check_potential_gradient,
    check_uniform_monotonicity,
    constant,
    diagonal_power,
    diagonal_power_modulus,
    evaluate,
    fit_modulus,
    flat_power,
    linear,
    make_operator,
    negated,
    perturb_operator,
    perturb_rhs,
    power_sum,
    register_operator,
    sign_shift,
)


class TestBuiltins:
    def test_diagonal_power_values(self):
        op = diagonal_power(3)
        np.testing.assert_allclose(evaluate(op, [2.0, -3.0, 0.0]), [4.0, -9.0, 0.0])

    def test_power_sum_component_exponents(self):
        # component m carries x_m |x_m|^(m-1)
        op = power_sum(4)
        np.testing.assert_allclose(evaluate(op, [2.0, 0, 0, 0]), [2.0, 0, 0, 0])
        np.testing.assert_allclose(evaluate(op, [0, 2.0, 0, 0]), [0, 4.0, 0, 0])
        np.testing.assert_allclose(evaluate(op, [0, 0, 0, -2.0]), [0, 0, 0, -16.0])

    def test_power_sum_unbounded_on_bounded_set(self):
        # every 2 e_m lies in the ball of radius 2, the outputs grow like 2^m
        for dim in (5, 10, 20):
            op = power_sum(dim)
            e = np.zeros(dim)
            e[-1] = 2.0
            assert np.linalg.norm(evaluate(op, e)) == pytest.approx(2.0 ** dim)

    def test_sign_shift_selection_at_kink(self):
        np.testing.assert_array_equal(evaluate(sign_shift(2), [0.0, -1.0]), [0.0, -1.5])

    def test_flat_power_is_flat(self):
        op = flat_power(3, flat=(1,))
        x = np.array([0.5, -0.2, 0.3])
        y = x + np.array([0.0, 0.9, 0.0])
        assert np.dot(evaluate(op, x) - evaluate(op, y), x - y) == 0.0

    def test_linear_rejects_non_monotone(self):
        with pytest.raises(ValueError):
            linear([[1.0, 0.0], [0.0, -1.0]])

    def test_skew_linear_is_monotone(self):
        op = linear([[0.0, 1.0], [-1.0, 0.0]])
        rep = check_monotonicity(op, 2000)
        assert rep["passed"]
        assert abs(rep["worst_pairing"]) < 1e-12

    def test_constant_operator(self):
        np.testing.assert_array_equal(evaluate(constant([1.0, 2.0]), [[0, 0], [5, 5]]),
                                      [[1.0, 2.0], [1.0, 2.0]])

    def test_domain_enforced(self):
        op = make_operator("diagonal_power", 2, domain=(-np.ones(2), np.ones(2)))
        with pytest.raises(DomainError):
            evaluate(op, [2.0, 0.0])

    def test_dimension_checked(self):
        with pytest.raises(ValueError):
            evaluate(diagonal_power(3), [1.0, 2.0])

    def test_registry(self):
        register_operator("scaled_identity", lambda dim, k=1.0: linear(k * np.eye(dim)))
        op = make_operator("scaled_identity", 2, {"k": 3.0})
        np.testing.assert_allclose(evaluate(op, [1.0, 1.0]), [3.0, 3.0])
        with pytest.raises(ValueError):
            make_operator("no_such_operator", 2)

    @pytest.mark.parametrize("factory", [diagonal_power, power_sum, flat_power, sign_shift])
    def test_potentials(self, factory):
        op = factory(4)
        pts = np.random.default_rng(0).uniform(-1, 1, (20, 4))
        assert check_potential_gradient(op, pts) < 1e-6


class TestMonotonicityAudits:
    @pytest.mark.parametrize("factory", [diagonal_power, power_sum, flat_power, sign_shift])
    def test_builtins_monotone(self, factory):
        assert check_monotonicity(factory(5), 5000)["passed"]

    def test_negated_fails(self):
        rep = check_monotonicity(negated(diagonal_power(5)), 2000)
        assert not rep["passed"]
        assert rep["worst_pairing"] < -1e-3

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_analytic_modulus_holds(self, p):
        s = SpaceSpec(5, p)
        psi = diagonal_power_modulus(s)
        assert check_uniform_monotonicity(diagonal_power(5), psi, s, 10_000, region=(-2, 2))["passed"]

    def test_analytic_modulus_scalar_case_is_sharp(self):
        # for dim 1, (a|a| - b|b|)(a - b) >= |a - b|^3 / 2 with equality at b = -a
        s = SpaceSpec(1, 2.0)
        psi = diagonal_power_modulus(s)
        a, b = 0.7, -0.7
        val = (a * abs(a) - b * abs(b)) * (a - b)
        assert val == pytest.approx(float(psi.lower_bound(abs(a - b))))

    def test_overstated_modulus_fails(self):
        s = SpaceSpec(5, 2.0)
        psi = diagonal_power_modulus(s)
        big = MonotonicityModulus("power", c=psi.c * 50, s=psi.s)
        assert not check_uniform_monotonicity(diagonal_power(5), big, s, 5000)["passed"]

    def test_flat_operator_has_no_modulus(self):
        with pytest.raises(ValueError):
            fit_modulus(flat_power(3), SpaceSpec(3, 2.0), 2.0, 5000)

    def test_fit_modulus_reaudits(self):
        s = SpaceSpec(4, 3.0)
        psi = fit_modulus(diagonal_power(4), s, 2.0, 5000, seed=0)
        assert check_uniform_monotonicity(diagonal_power(4), psi, s, 5000, seed=1)["passed"]

    def test_modulus_inverse(self):
        psi = MonotonicityModulus("power", c=2.0, s=3.0)
        assert float(psi.inverse(psi(0.7))) == pytest.approx(0.7)
        tab = MonotonicityModulus("table", table=((0.0, 1.0, 2.0), (0.0, 1.0, 4.0)))
        assert float(tab.inverse(2.5)) == pytest.approx(1.5)

    def test_modulus_validation(self):
        with pytest.raises(ValueError):
            MonotonicityModulus("power", c=-1.0, s=2.0)
        with pytest.raises(ValueError):
            MonotonicityModulus("table", table=((0.0, 1.0), (0.0, -1.0)))

    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_local_growth_bound(self, p):
        s = SpaceSpec(5, p)
        rep = check_lemma2_bound(diagonal_power(5), s, np.zeros(5), 0.5, 5000, region=(-3, 3))
        assert rep["passed"], rep


class TestPerturbations:
    @pytest.mark.parametrize("mode", ["constant", "field", "monotone_safe"])
    def test_within_envelope(self, mode):
        s = SpaceSpec(4, 3.0)
        op = diagonal_power(4)
        pert = OperatorPerturbation(0.1, ("affine", (1.0, 0.5)), mode, seed=3)
        ah = perturb_operator(op, pert, s)
        x = np.random.default_rng(0).uniform(-2, 2, (200, 4))
        gap = dual_norm(evaluate(ah, x) - evaluate(op, x), s)
        env = 0.1 * (1.0 + 0.5 * norm(x, s))
        assert np.all(gap <= env * (1 + 1e-12))

    def test_monotone_safe_stays_monotone(self):
        pert = OperatorPerturbation(0.5, ("affine", (1.0, 1.0)), "monotone_safe")
        ah = perturb_operator(flat_power(4), pert, SpaceSpec(4, 3.0))
        assert check_monotonicity(ah, 5000)["passed"]

    def test_zero_level_is_identity(self):
        op = diagonal_power(3)
        assert perturb_operator(op, OperatorPerturbation(0.0), SpaceSpec(3, 2.0)) is op

    def test_rhs_perturbation_has_exact_size(self):
        s = SpaceSpec(3, 3.0)
        f = np.array([1.0, 2.0, 3.0])
        fw = perturb_rhs(f, RhsPerturbation(0.01, seed=4), s)
        assert dual_norm(fw - f, s) == pytest.approx(0.01)
        back = perturb_rhs(f, RhsPerturbation(0.01, seed=4, sign=-1.0), s)
        np.testing.assert_allclose(fw - f, f - back)

    def test_invalid_levels(self):
        with pytest.raises(ValueError):
            OperatorPerturbation(-1.0)
        with pytest.raises(ValueError):
            RhsPerturbation(-1.0)
        with pytest.raises(ValueError):
            OperatorPerturbation(1.0, mode="bogus")

    @settings(max_examples=50, deadline=None)
    @given(x=arrays(np.float64, 3, elements=st.floats(-5, 5)),
           y=arrays(np.float64, 3, elements=st.floats(-5, 5)))
    def test_sum_of_monotone_is_monotone(self, x, y):
        op = MonotoneOp(fn=lambda z: diagonal_power(3).fn(z) + sign_shift(3).fn(z), dim=3)
        assert np.dot(evaluate(op, x) - evaluate(op, y), x - y) >= -1e-9
