import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from mileage_smooth.turbine import (BETZ_LIMIT, CpCoefficients, CpFitError, CpGrid, TurbineParams,
                                    TurbineState, aero_power, cp_eval, cp_reference, electrical_power,
                                    fit_cp, kinetic_headroom, mppt_reference, step_rotor)


def reference_optimum():
    res = minimize_scalar(lambda x: -cp_reference(x, 0.0), bounds=(3, 12), method="bounded",
                          options={"xatol": 1e-10})
    return res.x, -res.fun


# -- cp_eval / fit_cp ---------------------------------------------------------

def test_zero_polynomial_is_zero():
    zero = CpCoefficients(c=np.zeros((3, 3)), lambda_opt=1.0, cp_max=0.0)
    assert cp_eval(7.3, 12.0, zero) == 0.0


def test_cp_eval_rejects_nonpositive_lambda(coeffs):
    with pytest.raises(ValueError):
        cp_eval(0.0, 0.0, coeffs)
    with pytest.raises(ValueError):
        cp_eval(np.array([1.0, -2.0]), 0.0, coeffs)


def test_cp_eval_clamps_negative_values(coeffs):
    # far outside the fit grid the raw polynomial goes negative
    assert cp_eval(0.5, 25.0, coeffs) == 0.0


def test_cp_eval_matches_grouped_polynomial(coeffs):
    m = coeffs.matrix
    lam, beta = 6.7, 4.2
    rows = [m[i, 0] * beta**2 + m[i, 1] * beta + m[i, 2] for i in range(3)]
    expect = rows[0] * lam**2 + rows[1] * lam + rows[2]
    assert cp_eval(lam, beta, coeffs) == pytest.approx(expect, rel=1e-12)


def test_fit_matches_independent_vandermonde_lstsq(coeffs):
    lam, beta = CpGrid().points()
    V = np.polynomial.polynomial.polyvander2d(lam, beta, [2, 2])
    sol, *_ = np.linalg.lstsq(V, cp_reference(lam, beta), rcond=None)
    sol = sol.reshape(3, 3)  # sol[i, j] multiplies lam**i * beta**j
    ours = coeffs.matrix      # ours[i, j] multiplies lam**(2-i) * beta**(2-j)
    np.testing.assert_allclose(ours, sol[::-1, ::-1], rtol=1e-8, atol=1e-12)


def test_fit_diagnostics_are_consistent(coeffs):
    lam, beta = CpGrid().points()
    y = cp_reference(lam, beta)
    resid = np.array([(coeffs.lambda_poly(b)[0] * l + coeffs.lambda_poly(b)[1]) * l + coeffs.lambda_poly(b)[2]
                      for l, b in zip(lam, beta)]) - y
    assert coeffs.rmse == pytest.approx(math.sqrt(np.mean(resid**2)), rel=1e-9)
    assert coeffs.r2 == pytest.approx(1 - np.sum(resid**2) / np.sum((y - y.mean())**2), rel=1e-9)
    assert coeffs.max_abs_error == pytest.approx(np.abs(resid).max(), rel=1e-9)


def test_cp_max_at_lambda_opt(coeffs):
    assert cp_eval(coeffs.lambda_opt, 0.0, coeffs) == pytest.approx(coeffs.cp_max, abs=1e-9)
    assert 0 < coeffs.cp_max < BETZ_LIMIT
    # a golden-section optimum: neighbours are not higher
    for d in (-1e-3, 1e-3):
        assert cp_eval(coeffs.lambda_opt + d, 0.0, coeffs) <= coeffs.cp_max + 1e-12


def test_fit_at_mid_grid_point(coeffs):
    value = cp_eval(6.0, 10.0, coeffs)
    assert 0 < value < coeffs.cp_max
    assert value == pytest.approx(cp_reference(6.0, 10.0), abs=0.02)


def test_fitted_values_stay_physical(coeffs):
    lam, beta = CpGrid().points()
    v = cp_eval(lam, beta, coeffs)
    assert v.min() >= 0 and v.max() <= 0.6


@pytest.mark.xfail(strict=True, reason="quadratic-by-quadratic surface cannot reach RMSE 0.02 on this grid "
                   "(least-squares optimum is 0.0202, R2 0.983)")
def test_fit_rmse_and_r2_targets(coeffs):
    assert coeffs.rmse <= 0.02 and coeffs.r2 >= 0.99


@pytest.mark.xfail(strict=True, reason="least-squares residual peaks near 0.17 at the low-lambda, "
                   "low-pitch corner where the reference surface bends sharply")
def test_fit_max_abs_error_target(coeffs):
    assert coeffs.max_abs_error <= 0.05


@pytest.mark.xfail(strict=True, reason="fitted optimum sits at lambda 9.27, cp 0.456; the quadratic "
                   "cannot follow the skewed reference peak at lambda 8.10, cp 0.480")
def test_fit_reproduces_reference_optimum(coeffs):
    lam_ref, cp_ref = reference_optimum()
    assert abs(coeffs.lambda_opt - lam_ref) <= 0.5
    assert abs(coeffs.cp_max - cp_ref) <= coeffs.rmse


def test_reference_optimum_oracle():
    lam_ref, cp_ref = reference_optimum()
    assert lam_ref == pytest.approx(8.1, abs=0.05)
    assert cp_ref == pytest.approx(0.48, abs=1e-3)


def test_single_pitch_grid_is_rank_deficient():
    with pytest.raises(CpFitError):
        fit_cp(CpGrid(beta_min=0.0, beta_max=0.0))


def test_too_few_points_rejected():
    with pytest.raises(CpFitError):
        fit_cp(CpGrid(lambda_min=5, lambda_max=6, lambda_step=1, beta_min=0, beta_max=1, beta_step=1))


def _third_difference(f, x0, h):
    return f(x0 + 3 * h) - 3 * f(x0 + 2 * h) + 3 * f(x0 + h) - f(x0)


@given(lam=st.floats(2.0, 14.0), beta=st.floats(0.0, 20.0), h=st.floats(0.1, 1.0))
def test_exactly_quadratic_in_each_axis(coeffs, lam, beta, h):
    # third differences of a quadratic vanish; evaluated away from the zero clamp
    from mileage_smooth.turbine import _cp_raw
    assert abs(_third_difference(lambda x: _cp_raw(x, beta, coeffs), lam, h)) <= 1e-9
    assert abs(_third_difference(lambda x: _cp_raw(lam, x, coeffs), beta, h)) <= 1e-9


# -- params / state -----------------------------------------------------------

def test_params_validation(coeffs):
    p = TurbineParams(cp=coeffs)
    assert p.swept_area == pytest.approx(math.pi * 63.0**2, rel=1e-9)
    with pytest.raises(ValueError):
        TurbineParams(cp=coeffs, omega_min=1.6)
    with pytest.raises(ValueError):
        TurbineParams(cp=coeffs, rho=0.0)
    with pytest.raises(ValueError):
        TurbineParams(cp=coeffs, beta_min=25.0)


def test_state_check(params):
    TurbineState(1.0, 0.0, 1e6).check(params)
    with pytest.raises(ValueError):
        TurbineState(1.6, 0.0).check(params)
    with pytest.raises(ValueError):
        TurbineState(1.0, 0.0, -5.0).check(params)


# -- power --------------------------------------------------------------------

def test_aero_power_zero_wind(params):
    assert aero_power(0.0, 1.0, 0.0, params) == 0.0


def test_aero_power_at_optimum(params):
    w = params.cp.lambda_opt * 10 / params.rotor_radius
    expect = 0.5 * 1.225 * params.swept_area * 1000 * params.cp.cp_max
    assert aero_power(10.0, w, 0.0, params) == pytest.approx(expect, rel=1e-9)


@given(v=st.floats(2.0, 12.0), lam=st.floats(4.0, 11.0), beta=st.floats(0.0, 15.0))
def test_aero_power_cubic_in_wind(params, v, lam, beta):
    R = params.rotor_radius
    p1 = aero_power(v, lam * v / R, beta, params)
    p2 = aero_power(2 * v, lam * 2 * v / R, beta, params)
    assert p2 == pytest.approx(8 * p1, rel=1e-9, abs=1e-6)


def test_electrical_power_examples(params):
    aero = aero_power(10.0, 1.0, 0.0, params)
    assert electrical_power(10.0, 1.0, 1.0, 0.0, 4.0, params) == aero
    got = electrical_power(10.0, 1.05, 1.00, 0.0, 4.0, params)
    assert got == pytest.approx(aero + 3.544e7 * 1.00 * 0.05 / 4, rel=1e-12)
    assert got > aero


def test_mppt_reference(params):
    assert mppt_reference(0.0, params) == (params.omega_min, 0.0)
    v = 8.0
    w, p = mppt_reference(v, params)
    assert params.omega_min < w < params.omega_max
    assert p == pytest.approx(0.5 * params.rho * params.swept_area * v**3 * params.cp.cp_max, rel=1e-9)
    assert mppt_reference(25.0, params)[1] == params.rated_power


def test_kinetic_headroom():
    assert kinetic_headroom(1.0, 1.0, 4.0, 3.544e7) == 0.0
    assert kinetic_headroom(1.1, 1.0, 4.0, 3.544e7) == pytest.approx(0.5 * 3.544e7 * 0.21 / 4, rel=1e-12)
    assert kinetic_headroom(1.1, 1.0, 4.0, 3.544e7) == pytest.approx(9.303e5, rel=1e-3)
    assert kinetic_headroom(0.9, 1.0, 4.0, 3.544e7) < 0


@given(v=st.floats(4.0, 9.5), w_prev=st.floats(0.5, 1.5))
def test_mppt_step_against_output_bound(params, v, w_prev):
    # one step onto the MPPT speed yields the bound minus the discretisation gap
    w_mpp, p_mpp = mppt_reference(v, params)
    assert p_mpp < params.rated_power
    got = electrical_power(v, w_prev, w_mpp, 0.0, 4.0, params)
    bound = p_mpp + kinetic_headroom(w_prev, w_mpp, 4.0, params.inertia_J)
    gap = 0.5 * params.inertia_J * (w_prev - w_mpp) ** 2 / 4.0
    assert got == pytest.approx(bound - gap, abs=1.0)


@pytest.mark.xfail(strict=True, reason="backward-difference inertial term differs from the kinetic "
                   "headroom by 0.5*J*(w_prev - w_mpp)^2/dt, so the identity only holds at w_prev = w_mpp")
def test_mppt_step_equals_output_bound_exactly(params):
    v, w_prev = 8.0, 1.2
    w_mpp, p_mpp = mppt_reference(v, params)
    got = electrical_power(v, w_prev, w_mpp, 0.0, 4.0, params)
    assert got == pytest.approx(p_mpp + kinetic_headroom(w_prev, w_mpp, 4.0, params.inertia_J), abs=1.0)


# -- step_rotor ---------------------------------------------------------------

def test_step_rotor_fixed_point(params):
    p = aero_power(9.0, 1.1, 2.0, params)
    rs = step_rotor(9.0, 2.0, p, 1.1, 4.0, params)
    assert rs.omega == pytest.approx(1.1, abs=1e-6)
    assert not rs.clamped and rs.feasible


@settings(max_examples=200)
@given(v=st.floats(4.0, 14.0), w_prev=st.floats(0.5, 1.5), beta=st.floats(0.0, 25.0),
       target=st.floats(0.5, 1.5))
def test_step_rotor_round_trip(params, v, w_prev, beta, target):
    # commands built from an interior speed are feasible by construction
    cmd = electrical_power(v, w_prev, target, beta, 4.0, params)
    rs = step_rotor(v, beta, cmd, w_prev, 4.0, params)
    if not rs.clamped:
        assert electrical_power(v, w_prev, rs.omega, beta, 4.0, params) == pytest.approx(cmd, abs=1.0)


def test_step_rotor_command_above_bound(params):
    v, w_prev = 8.0, 1.0
    w_mpp, p_mpp = mppt_reference(v, params)
    cmd = p_mpp + kinetic_headroom(w_prev, w_mpp, 4.0, params.inertia_J) + 5e6
    rs = step_rotor(v, 0.0, cmd, w_prev, 4.0, params)
    assert rs.clamped and not rs.feasible
    assert params.omega_min <= rs.omega <= params.omega_max
    # the returned speed maximises output: nudging it either way does not help
    best = electrical_power(v, w_prev, rs.omega, 0.0, 4.0, params)
    for d in (-1e-3, 1e-3):
        w = min(max(rs.omega + d, params.omega_min), params.omega_max)
        assert electrical_power(v, w_prev, w, 0.0, 4.0, params) <= best + 1e-3


def test_step_rotor_command_below_reach(params):
    # the rotor cannot absorb this much surplus even at omega_max
    rs = step_rotor(12.0, 0.0, 0.0, 1.5, 4.0, params)
    assert rs.clamped and rs.omega == params.omega_max


def test_step_rotor_rejects_bad_dt(params):
    with pytest.raises(ValueError):
        step_rotor(8.0, 0.0, 1e6, 1.0, 0.0, params)
