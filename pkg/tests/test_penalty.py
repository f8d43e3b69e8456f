import numpy as np
import pytest

from penaltyvi.geometry import SpaceSpec, build_profile, norm
from penaltyvi.operators import (
    MonotonicityModulus,
    diagonal_power,
    diagonal_power_modulus,
    flat_power,
    linear,
    make_operator,
)
from penaltyvi.penalty import (
    PenaltyProblem,
    Schedule,
    Step,
    assemble,
    check_generalized_solution,
    check_two_set_bound,
    check_vi_certificate,
    coupling_quantity,
    penalty_operator,
    regularized_reference,
    run_schedule,
    solve_penalty,
    solve_vi_reference,
)
from penaltyvi.sets import Ball, Box, Halfspace, project

# diagonal x|x| = f on the box [-1, 1]^5 has the clamped root sign(f) sqrt|f|
F_TESTBED = np.array([2.0, 0.25, -0.49, -1.69, 0.64])
X_TESTBED = np.array([1.0, 0.5, -0.7, -1.0, 0.8])


def scalar_problem(eps=0.1):
    s = SpaceSpec(1, 2.0)
    return PenaltyProblem(linear([[1.0]]), [0.0], Box([1.0], [2.0], s), s, eps)


class TestAssemble:
    def test_penalty_term_vanishes_on_set(self):
        s = SpaceSpec(3, 3.0)
        om = Ball(np.zeros(3), 1.0, s)
        np.testing.assert_array_equal(penalty_operator([0.3, -0.2, 0.1], om), 0.0)

    def test_hilbert_box(self):
        s = SpaceSpec(1, 2.0)
        om = Box([0.0], [1.0], s)
        np.testing.assert_allclose(penalty_operator([1.5], om), [0.5])

    def test_ball_p3(self):
        s = SpaceSpec(2, 3.0)
        om = Ball(np.zeros(2), 1.0, s)
        np.testing.assert_allclose(penalty_operator([2.0, 0.0], om), [1.0, 0.0])

    def test_regularization_term(self):
        s = SpaceSpec(1, 2.0)
        prob = PenaltyProblem(linear([[0.0]]), [0.0], Box([-1.0], [1.0], s), s, 1.0, alpha=0.5)
        np.testing.assert_allclose(assemble(prob)([3.0]), [2.0 + 1.5])

    def test_validation(self):
        s = SpaceSpec(1, 2.0)
        om = Box([1.0], [2.0], s)
        for eps in (0.0, -1.0):
            with pytest.raises(ValueError):
                PenaltyProblem(linear([[1.0]]), [0.0], om, s, eps)
        with pytest.raises(ValueError):
            PenaltyProblem(linear([[1.0]]), [0.0], om, s, 0.1, alpha=-1.0)
        with pytest.raises(ValueError):
            PenaltyProblem(linear([[1.0]]), [0.0], Box([1.0], [2.0], SpaceSpec(1, 3.0)), s, 0.1)

    def test_set_must_sit_inside_domain(self):
        s = SpaceSpec(2, 2.0)
        op = make_operator("diagonal_power", 2, domain=(-np.ones(2), np.ones(2)))
        with pytest.raises(ValueError):
            PenaltyProblem(op, np.zeros(2), Box(-np.ones(2), np.ones(2), s), s, 0.1)
        PenaltyProblem(op, np.zeros(2), Box(-0.5 * np.ones(2), 0.5 * np.ones(2), s), s, 0.1)


class TestSolve:
    @pytest.mark.parametrize("eps", [0.1, 1e-3, 1e-6])
    def test_scalar_closed_form(self, eps):
        rep = solve_penalty(scalar_problem(eps))
        assert rep.converged
        assert rep.x[0] == pytest.approx(1.0 / (1.0 + eps), rel=1e-12)
        assert rep.penalty_gap == pytest.approx(eps / (1.0 + eps), rel=1e-8)

    def test_certificate_passes(self):
        rep = solve_penalty(scalar_problem(), certificate_samples=2000)
        assert rep.certificate_passed

    def test_certificate_rejects_wrong_point(self):
        prob = scalar_problem()
        rep = solve_penalty(prob)
        rep.x = np.array([0.95])
        assert check_generalized_solution(rep, prob, 2000) < -0.1

    def test_interior_root_has_zero_gap(self):
        s = SpaceSpec(5, 3.0)
        f = np.array([0.25, -0.25, 0.0625, 0.0, 0.01])
        prob = PenaltyProblem(diagonal_power(5), f, Box(-np.ones(5), np.ones(5), s), s, 1e-3)
        rep = solve_penalty(prob)
        assert rep.penalty_gap == 0.0
        np.testing.assert_allclose(rep.x, [0.5, -0.5, 0.25, 0.0, 0.1], atol=1e-8)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_penalty_solution_approaches_vi_solution(self, p):
        s = SpaceSpec(5, p)
        om = Box(-np.ones(5), np.ones(5), s)
        errs = []
        for eps in (1e-2, 1e-4):
            rep = solve_penalty(PenaltyProblem(diagonal_power(5), F_TESTBED, om, s, eps))
            assert rep.converged and rep.certificate_passed
            errs.append(norm(rep.x - X_TESTBED, s))
        assert errs[1] < 0.05 * errs[0]

    @pytest.mark.parametrize("p", [1.5, 3.0])
    def test_halfspace_and_ball(self, p):
        s = SpaceSpec(3, p)
        for om in (Halfspace([1.0, 1.0, 0.0], 0.5, s), Ball([0.5, 0.0, 0.0], 1.0, s)):
            rep = solve_penalty(PenaltyProblem(diagonal_power(3), [3.0, 2.0, -1.0], om, s, 1e-4))
            assert rep.converged and rep.certificate_passed

    def test_forced_extragradient_agrees(self):
        s = SpaceSpec(5, 2.0)
        prob = PenaltyProblem(diagonal_power(5), F_TESTBED, Box(-np.ones(5), np.ones(5), s), s, 1e-2)
        a = solve_penalty(prob, tol=1e-10)
        b = solve_penalty(prob, tol=1e-10, method="extragradient")
        assert b.converged
        np.testing.assert_allclose(a.x, b.x, atol=1e-8)


class TestReference:
    def test_identity_on_interval(self):
        s = SpaceSpec(1, 2.0)
        ref = solve_vi_reference(linear([[1.0]]), [3.0], Box([0.0], [1.0], s))
        assert ref.converged
        assert ref.x_star[0] == pytest.approx(1.0, abs=1e-9)
        assert ref.residual_certificate >= -1e-9

    @pytest.mark.parametrize("p", [1.5, 3.0])
    def test_diagonal_clamp(self, p):
        s = SpaceSpec(5, p)
        ref = solve_vi_reference(diagonal_power(5), F_TESTBED, Box(-np.ones(5), np.ones(5), s))
        np.testing.assert_allclose(ref.x_star, X_TESTBED, atol=1e-9)

    def test_certificate_catches_wrong_point(self):
        s = SpaceSpec(5, 3.0)
        om = Box(-np.ones(5), np.ones(5), s)
        assert check_vi_certificate(diagonal_power(5), F_TESTBED, om, X_TESTBED) >= -1e-9
        bad = X_TESTBED.copy()
        bad[1] = 0.3
        assert check_vi_certificate(diagonal_power(5), F_TESTBED, om, bad) < -1e-3

    def test_regularized_reference_picks_min_norm(self):
        # coordinate 0 is flat with zero data, so every value in [-1, 1] solves
        # the VI there; the alpha J term selects 0
        s = SpaceSpec(3, 2.0)
        om = Box(-np.ones(3), np.ones(3), s)
        ref = regularized_reference(flat_power(3, flat=(0,)), [0.0, 0.25, 4.0], om, s)
        np.testing.assert_allclose(ref.x_star, [0.0, 0.5, 1.0], atol=1e-3)
        assert ref.residual_certificate >= -1e-6


class TestSchedule:
    def test_validation(self):
        with pytest.raises(ValueError):
            Schedule((Step(0.1), Step(0.1)))
        with pytest.raises(ValueError):
            Schedule((Step(0.1), Step(0.2)))
        with pytest.raises(ValueError):
            Schedule((Step(0.1, sigma=1e-3),))
        with pytest.raises(ValueError):
            Schedule((Step(0.1, alpha=0.0),), coupling="theorem3_regularized")
        with pytest.raises(ValueError):
            Schedule((Step(0.1, sigma=-1.0),), coupling="theorem2")
        with pytest.raises(ValueError):
            Schedule((), coupling="exact")
        with pytest.raises(ValueError):
            Schedule((Step(0.1),), coupling="nope")

    def test_exact_schedule_errors_decrease(self):
        s = SpaceSpec(5, 2.0)
        om = Box(-np.ones(5), np.ones(5), s)
        sched = Schedule(tuple(Step(e) for e in (1e-1, 1e-2, 1e-3)))
        res = run_schedule(diagonal_power(5), F_TESTBED, om, s, sched, reference=X_TESTBED)
        errs = [r["error"] for r in res.rows]
        assert not res.aborted
        assert errs[0] > errs[1] > errs[2]
        assert all(r["coupling"] == 0.0 for r in res.rows)

    def test_parallel_matches_sequential(self):
        s = SpaceSpec(5, 3.0)
        om = Box(-np.ones(5), np.ones(5), s)
        sched = Schedule(tuple(Step(e) for e in (1e-1, 1e-2, 1e-3)))
        a = run_schedule(diagonal_power(5), F_TESTBED, om, s, sched, warm_start=False)
        b = run_schedule(diagonal_power(5), F_TESTBED, om, s, sched, warm_start=False, threads=3)
        assert b.mode == "parallel"
        for ra, rb in zip(a.reports, b.reports):
            np.testing.assert_array_equal(ra.x, rb.x)

    def test_regularized_columns(self):
        s = SpaceSpec(3, 2.0)
        om = Box(-np.ones(3), np.ones(3), s)
        sched = Schedule(tuple(Step(10.0 ** -k, h=10.0 ** -k, omega=10.0 ** -k,
                                    alpha=10.0 ** (-k / 2)) for k in (1, 2, 3)),
                         coupling="theorem3_regularized")
        res = run_schedule(flat_power(3), [0.0, 0.25, 4.0], om, s, sched)
        assert res.coupling_checks["perturbation_over_alpha_decreasing"]
        assert [r["perturbation_over_alpha"] for r in res.rows] == pytest.approx(
            [2 * 10 ** -0.5, 2 * 10 ** -1.0, 2 * 10 ** -1.5])


class TestCoupling:
    def test_zero_sigma(self):
        assert coupling_quantity(0.0, None, None) == (0.0, False)

    def test_saturation_flag(self):
        s = SpaceSpec(2, 2.0)
        prof, dprof = build_profile(s), build_profile(s.dual())
        assert coupling_quantity(5.0, prof, dprof) == (2.0, True)
        v, sat = coupling_quantity(1e-6, prof, dprof)
        assert not sat and 0 < v < 2

    def test_two_set_identical_sets(self):
        s = SpaceSpec(2, 2.0)
        om = Box(-np.ones(2), np.ones(2), s)
        rep = solve_penalty(PenaltyProblem(diagonal_power(2), [2.0, 0.1], om, s, 1e-2))
        tb = check_two_set_bound(rep, rep, om, om, diagonal_power_modulus(s),
                                 build_profile(s), build_profile(s.dual()))
        assert tb["sigma"] == 0.0
        assert tb["lhs"] == 0.0 and tb["passed"]

    def test_two_set_small_sets(self):
        s = SpaceSpec(2, 2.0)
        prof, dprof = build_profile(s), build_profile(s.dual())
        psi = diagonal_power_modulus(s)
        om1 = Box(-5e-4 * np.ones(2), 5e-4 * np.ones(2), s)
        om2 = Box(-4e-4 * np.ones(2), 6e-4 * np.ones(2), s)
        f = np.array([1e-3, -2e-3])
        r1 = solve_penalty(PenaltyProblem(diagonal_power(2), f, om1, s, 1e-2))
        r2 = solve_penalty(PenaltyProblem(diagonal_power(2), f, om2, s, 1e-2))
        tb = check_two_set_bound(r1, r2, om1, om2, psi, prof, dprof)
        assert tb["passed"] and not tb["vacuous"]

    def test_two_set_rejects_mixed_eps(self):
        s = SpaceSpec(1, 2.0)
        a = solve_penalty(scalar_problem(0.1))
        b = solve_penalty(scalar_problem(0.01))
        om = Box([1.0], [2.0], s)
        with pytest.raises(ValueError):
            check_two_set_bound(a, b, om, om, MonotonicityModulus("power", c=1.0, s=2.0),
                                build_profile(s), build_profile(s.dual()))

    def test_square_coupling_tends_to_constant_in_hilbert_space(self):
        # for p = 2, delta^-1(s) ~ 2 sqrt(2 s) and g^-1(v) ~ 8 v, so with
        # sigma = eps^2 the coupling over eps tends to 16 sqrt 2 instead of 0
        s = SpaceSpec(2, 2.0)
        prof, dprof = build_profile(s), build_profile(s.dual())
        eps = np.array([1e-2, 1e-3, 1e-4])
        sq = [coupling_quantity(e * e, prof, dprof)[0] / e for e in eps]
        np.testing.assert_allclose(sq, 16 * np.sqrt(2), rtol=1e-2)
        quartic = [coupling_quantity(e ** 4, prof, dprof)[0] / e for e in eps]
        assert quartic[0] > quartic[1] > quartic[2]
        # below the tabulated range the inverse is extended conservatively
        ratio = np.array(quartic) / (16 * np.sqrt(2) * eps)
        assert np.all((ratio > 0.99) & (ratio < 1.1))
