"""Smoothing surrogate math: frozen values, bounds, and FD consistency.

The reference constants were computed with 40-digit arithmetic
(mpmath) and frozen here:

    ln(e + 1/e)          = 1.1269280110429725
    tanh(1)              = 0.7615941559557649
    1/(1 + exp(-2))      = 0.8807970779778823
    2*(ln(e+1/e)-tanh 1) = 0.7306677101744152
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1flow.problem import Problem, builtin
from l1flow.selfcheck import run_gradient_fd, run_hessian_fd, run_mu_sign
from l1flow.smoothing import (
    AugmentedState,
    SmoothingParams,
    energy,
    grad_e1,
    hessian_blocks,
    logistic_coeff,
    smooth_abs,
    smooth_abs_dmu,
    smooth_sign,
)

UNIT = SmoothingParams(theta=1.0)
BENCH = SmoothingParams(theta=0.02)


def single_residual_problem(text="x1"):
    return Problem.from_strings([text], n_vars=1)


class TestSmoothAbs:
    def test_symmetric_case(self):
        assert smooth_abs(0.0, 1.0, UNIT) == pytest.approx(math.log(2.0), rel=1e-15)

    def test_frozen_reference(self):
        assert smooth_abs(1.0, 1.0, UNIT) == pytest.approx(1.1269280110429725, rel=1e-15)

    def test_huge_residual_no_overflow(self):
        assert smooth_abs(1e6, 0.1, BENCH) == 1e6

    def test_mu_zero_collapses(self):
        assert smooth_abs(-3.5, 0.0, BENCH) == 3.5
        assert smooth_abs(0.0, 0.0, BENCH) == 0.0

    def test_even_in_r_and_mu(self):
        for r, mu in [(0.3, 0.7), (12.0, 0.01), (1e-8, 3.0)]:
            assert smooth_abs(r, mu, BENCH) == smooth_abs(-r, mu, BENCH)
            assert smooth_abs(r, mu, BENCH) == smooth_abs(r, -mu, BENCH)


class TestSmoothSign:
    def test_zero_residual(self):
        assert smooth_sign(0.0, 1.0, UNIT) == 0.0
        assert smooth_sign(0.0, 0.0, UNIT) == 0.0

    def test_frozen_reference(self):
        assert smooth_sign(1.0, 1.0, UNIT) == pytest.approx(0.7615941559557649, rel=1e-15)

    def test_exact_sign_at_mu_zero(self):
        assert smooth_sign(-1.0, 0.0, UNIT) == -1.0
        assert smooth_sign(2.0, 0.0, UNIT) == 1.0

    def test_odd_in_r_even_in_mu(self):
        for r, mu in [(0.3, 0.7), (5.0, 0.2), (1e-4, 1.0)]:
            assert smooth_sign(-r, mu, UNIT) == -smooth_sign(r, mu, UNIT)
            assert smooth_sign(r, -mu, UNIT) == smooth_sign(r, mu, UNIT)

    def test_saturates_to_unit(self):
        assert smooth_sign(1e6, 0.1, BENCH) == 1.0
        assert smooth_sign(-1e6, 0.1, BENCH) == -1.0


class TestLogisticCoeff:
    def test_half_at_zero(self):
        assert logistic_coeff(0.0, 1.0, UNIT) == 0.5

    def test_frozen_reference(self):
        assert logistic_coeff(1.0, 1.0, UNIT) == pytest.approx(0.8807970779778823, rel=1e-15)

    def test_saturation_without_overflow(self):
        assert logistic_coeff(1e300, 1.0, UNIT) == 1.0
        assert logistic_coeff(-1e300, 1.0, UNIT) == 0.0

    def test_open_interval_off_saturation(self):
        v = logistic_coeff(3.0, 1.0, UNIT)
        assert 0.0 < v < 1.0

    def test_mu_zero_rejected(self):
        with pytest.raises(ValueError):
            logistic_coeff(1.0, 0.0, UNIT)


class TestSmoothAbsDmu:
    def test_frozen_reference(self):
        s = smooth_abs(1.0, 1.0, UNIT)
        a = smooth_sign(1.0, 1.0, UNIT)
        assert smooth_abs_dmu(1.0, 1.0, s, a) == pytest.approx(
            0.7306677101744152, rel=1e-14
        )

    def test_symmetric_case(self):
        s = smooth_abs(0.0, 1.0, UNIT)
        a = smooth_sign(0.0, 1.0, UNIT)
        assert smooth_abs_dmu(0.0, 1.0, s, a) == pytest.approx(
            2.0 * math.log(2.0), rel=1e-15
        )

    def test_limit_at_mu_zero(self):
        assert smooth_abs_dmu(3.0, 0.0, 3.0, 1.0) == 0.0

    def test_sign_follows_mu(self):
        # unsaturated regime so the surrogate gap is strictly positive
        for mu in (0.5, -0.5, 2.0, -2.0):
            s = smooth_abs(0.7, mu, UNIT)
            a = smooth_sign(0.7, mu, UNIT)
            d = smooth_abs_dmu(0.7, mu, s, a)
            assert d * mu > 0.0


@given(
    r=st.floats(-1e3, 1e3).filter(lambda v: v != 0.0),
    mu_mag=st.floats(1e-4, 1e2),
    mu_sign=st.sampled_from([-1.0, 1.0]),
    theta=st.floats(1e-3, 10.0),
)
@settings(max_examples=500, deadline=None)
def test_pinching_bounds(r, mu_mag, mu_sign, theta):
    mu = mu_mag * mu_sign
    params = SmoothingParams(theta=theta)
    s = smooth_abs(r, mu, params)
    width = theta * mu * mu
    aa = abs(r) / width
    ub = abs(r) + width * math.log(2.0)
    # strict bounds wherever the margins are representable in doubles
    assert s < ub if aa > 1e-12 else s <= ub
    if aa < 300.0 and width * math.exp(-2.0 * aa) > 8e-16 * abs(r):
        assert s > abs(r)
    else:
        assert s >= abs(r)


@given(
    r=st.floats(-1e3, 1e3),
    mu=st.floats(1e-4, 1e2),
    theta=st.floats(1e-3, 10.0),
)
@settings(max_examples=500, deadline=None)
def test_sign_weight_range_and_gap(r, mu, theta):
    params = SmoothingParams(theta=theta)
    a = smooth_sign(r, mu, params)
    assert abs(a) <= 1.0
    if r != 0.0:
        assert math.copysign(1.0, a if a != 0.0 else r) == math.copysign(1.0, r)
    aa = abs(r) / (theta * mu * mu)
    if aa <= 350.0:
        s = smooth_abs(r, mu, params)
        if aa < 18.0:  # below tanh's own float saturation
            assert abs(a) < 1.0
            assert s - a * r > 0.0
        else:
            assert s - a * r >= 0.0


class TestEnergy:
    def test_single_residual_reference(self):
        prob = single_residual_problem()
        rep = energy(AugmentedState(np.array([1.0]), 1.0), prob, UNIT)
        assert rep.e == pytest.approx(1.1269280110429725, rel=1e-15)
        assert rep.e1 == pytest.approx(1.6269280110429725, rel=1e-15)
        assert rep.grad[0] == pytest.approx(1.7615941559557649, rel=1e-15)
        assert rep.grad[1] == pytest.approx(1.7306677101744152, rel=1e-14)

    def test_mu_zero_gives_objective_and_zero_dmu(self):
        prob = builtin("problem1")
        for x in ([0.4, -0.9], [1.0, 1.0], [-1.7, 0.3]):
            rep = energy(AugmentedState(np.array(x), 0.0), prob, BENCH)
            assert rep.e == pytest.approx(prob.objective(x), rel=1e-15)
            assert rep.e1 == rep.e
            assert rep.grad[-1] == 0.0

    def test_e1_identity_and_s_bounds(self):
        prob = builtin("rastrigin_l1")
        z = AugmentedState(np.array([0.3, -0.8]), 2.0)
        rep = energy(z, prob, BENCH)
        xx = float(z.x @ z.x)
        assert rep.e1 == rep.e + 0.5 * z.mu**2 * xx
        r, _ = prob.residuals_and_jacobian(z.x)
        assert np.all(rep.s >= np.abs(r))
        assert np.all(np.abs(rep.alpha) <= 1.0)

    def test_optimal_point_at_mu_zero(self):
        prob = builtin("problem1")
        x = np.array([math.sqrt(3.0), 0.0])
        rep = energy(AugmentedState(x, 0.0), prob, BENCH)
        assert rep.e1 == pytest.approx(0.0, abs=1e-12)
        report = prob.stationarity_residual(x)
        assert report.kkt_residual <= 1e-8

    def test_per_residual_terms_match_scalar_ops(self):
        prob = builtin("problem1")
        z = AugmentedState(np.array([0.7, -0.2]), 1.3)
        rep = energy(z, prob, BENCH)
        r, _ = prob.residuals_and_jacobian(z.x)
        for i in range(len(r)):
            assert rep.s[i] == smooth_abs(r[i], z.mu, BENCH)
            assert rep.alpha[i] == smooth_sign(r[i], z.mu, BENCH)

    def test_gradient_fd_agreement(self):
        rng = np.random.default_rng(11)
        suite = run_gradient_fd(100, rng)
        assert suite.failures == 0, f"worst rel err {suite.worst}"

    def test_mu_drive_sign(self):
        rng = np.random.default_rng(12)
        suite = run_mu_sign(500, rng)
        assert suite.failures == 0
        assert suite.worst > 0.0

    def test_limit_consistency_toward_mu_zero(self):
        prob = builtin("problem1")
        x = np.array([0.37, -0.81])
        r, jac = prob.residuals_and_jacobian(x)
        limit_grad = jac.T @ np.sign(r)
        f = prob.objective(x)
        for mu in (1e-1, 1e-2, 1e-3, 1e-4):
            rep = energy(AugmentedState(x, mu), prob, BENCH)
            assert abs(rep.e - f) <= 2.0 * BENCH.theta * mu * mu * math.log(2.0) + 1e-15
        rep = energy(AugmentedState(x, 1e-4), prob, BENCH)
        np.testing.assert_allclose(
            rep.grad[:-1] - mu * mu * x, limit_grad, rtol=0, atol=1e-6
        )


class TestHessianBlocks:
    def test_closed_form_entry(self):
        prob = single_residual_problem()
        h = hessian_blocks(AugmentedState(np.array([0.0]), 1.0), prob, UNIT)
        assert h[0, 0] == pytest.approx(2.0, rel=1e-14)

    def test_symmetry(self):
        prob = builtin("rastrigin_l1")
        h = hessian_blocks(AugmentedState(np.array([0.3, 0.4]), 0.8), prob, BENCH)
        assert np.max(np.abs(h - h.T)) <= 1e-12

    def test_mu_zero_rejected(self):
        prob = builtin("problem1")
        with pytest.raises(ValueError):
            hessian_blocks(AugmentedState(np.array([1.0, 1.0]), 0.0), prob, BENCH)

    def test_fd_agreement(self):
        rng = np.random.default_rng(13)
        suite = run_hessian_fd(25, rng)
        assert suite.failures == 0, f"worst rel err {suite.worst}"


class TestTypes:
    def test_params_validation(self):
        with pytest.raises(ValueError):
            SmoothingParams(theta=0.0)
        with pytest.raises(ValueError):
            SmoothingParams(theta=-1.0)

    def test_state_round_trip(self):
        z = AugmentedState(np.array([1.0, -2.0]), 3.0)
        again = AugmentedState.from_array(z.to_array())
        assert np.array_equal(again.x, z.x)
        assert again.mu == z.mu
