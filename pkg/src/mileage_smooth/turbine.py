"""Single wind turbine model.

Power coefficient surface, aerodynamic and swing-equation electrical power,
MPPT reference and kinetic-energy headroom. Functions that the optimizer
calls in its inner loop accept numpy arrays as well as scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

BETZ_LIMIT = 16.0 / 27.0


class CpFitError(ValueError):
    """Raised when the Cp regression cannot be identified from the grid."""


@dataclass(frozen=True)
class CpCoefficients:
    """Coefficients of the quadratic-by-quadratic Cp regression.

    Row ``i`` multiplies ``lambda**(2 - i)``; within a row the columns
    multiply ``beta**2``, ``beta`` and ``1``.
    """

    c: tuple[tuple[float, float, float], ...]
    lambda_opt: float
    cp_max: float
    beta_ref: float = 0.0
    rmse: float = float("nan")
    r2: float = float("nan")
    max_abs_error: float = float("nan")

    def __post_init__(self):
        arr = np.asarray(self.c, dtype=float)
        if arr.shape != (3, 3):
            raise ValueError(f"Cp coefficients must be 3x3, got {arr.shape}")
        object.__setattr__(self, "c", tuple(tuple(float(x) for x in row) for row in arr))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.c)

    def lambda_poly(self, beta):
        """Return the (a, b, c) coefficients of Cp as a polynomial in lambda at pitch ``beta``."""
        m = self.c
        beta = np.asarray(beta, dtype=float)
        a = (m[0][0] * beta + m[0][1]) * beta + m[0][2]
        b = (m[1][0] * beta + m[1][1]) * beta + m[1][2]
        c = (m[2][0] * beta + m[2][1]) * beta + m[2][2]
        return a, b, c

    def beta_poly(self, lam):
        """Return the (a, b, c) coefficients of Cp as a polynomial in beta at tip-speed ratio ``lam``."""
        m = self.c
        lam = np.asarray(lam, dtype=float)
        lam2 = lam * lam
        a = m[0][0] * lam2 + m[1][0] * lam + m[2][0]
        b = m[0][1] * lam2 + m[1][1] * lam + m[2][1]
        c = m[0][2] * lam2 + m[1][2] * lam + m[2][2]
        return a, b, c

    def to_dict(self) -> dict:
        return {
            "c": [list(row) for row in self.c],
            "lambda_opt": self.lambda_opt,
            "cp_max": self.cp_max,
            "beta_ref": self.beta_ref,
            "rmse": self.rmse,
            "r2": self.r2,
            "max_abs_error": self.max_abs_error,
        }


@dataclass(frozen=True)
class TurbineParams:
    cp: CpCoefficients
    rho: float = 1.225
    rotor_radius: float = 63.0
    inertia_J: float = 3.544e7
    rated_power: float = 5.0e6
    omega_min: float = 0.5
    omega_max: float = 1.5
    beta_min: float = 0.0
    beta_max: float = 25.0
    pitch_rate_max: float = 5.0
    swept_area: float = field(init=False)

    def __post_init__(self):
        for name in ("rho", "rotor_radius", "inertia_J", "rated_power", "pitch_rate_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.omega_min < self.omega_max:
            raise ValueError("need 0 < omega_min < omega_max")
        if not self.beta_min < self.beta_max:
            raise ValueError("need beta_min < beta_max")
        object.__setattr__(self, "swept_area", math.pi * self.rotor_radius**2)

    def omega_mpp(self, v):
        return np.clip(self.cp.lambda_opt * np.asarray(v, dtype=float) / self.rotor_radius,
                       self.omega_min, self.omega_max)


@dataclass(frozen=True)
class TurbineState:
    omega: float
    beta: float
    p_e: float = 0.0

    def check(self, params: TurbineParams, tol: float = 1e-9) -> None:
        if not params.omega_min - tol <= self.omega <= params.omega_max + tol:
            raise ValueError(f"omega {self.omega} outside [{params.omega_min}, {params.omega_max}]")
        if not params.beta_min - tol <= self.beta <= params.beta_max + tol:
            raise ValueError(f"beta {self.beta} outside [{params.beta_min}, {params.beta_max}]")
        if self.p_e < -tol:
            raise ValueError(f"negative electrical power {self.p_e}")


# -- power coefficient ------------------------------------------------------

def cp_reference(lam, beta):
    """Standard analytic Cp(lambda, beta) surface used as the regression target."""
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(beta, dtype=float)
    inv_li = 1.0 / (lam + 0.08 * beta) - 0.035 / (beta**3 + 1.0)
    return 0.5176 * (116.0 * inv_li - 0.4 * beta - 5.0) * np.exp(-21.0 * inv_li) + 0.0068 * lam


def _cp_raw(lam, beta, coeffs: CpCoefficients):
    a, b, c = coeffs.lambda_poly(beta)
    return (a * lam + b) * lam + c


def cp_eval(lam, beta, coeffs: CpCoefficients):
    """Evaluate the Cp regression, clamped below at zero."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0):
        raise ValueError("tip-speed ratio must be positive")
    out = np.maximum(_cp_raw(lam_arr, beta, coeffs), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CpGrid:
    lambda_min: float = 3.0
    lambda_max: float = 12.0
    lambda_step: float = 0.25
    beta_min: float = 0.0
    beta_max: float = 20.0
    beta_step: float = 1.0

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        lam = _inclusive_range(self.lambda_min, self.lambda_max, self.lambda_step)
        beta = _inclusive_range(self.beta_min, self.beta_max, self.beta_step)
        L, B = np.meshgrid(lam, beta)
        return L.ravel(), B.ravel()


def _inclusive_range(lo, hi, step):
    if step <= 0 or hi <= lo:
        return np.array([float(lo)])
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _design_matrix(lam, beta):
    l2 = lam * lam
    b2 = beta * beta
    one = np.ones_like(lam)
    return np.column_stack([b2 * l2, beta * l2, l2, b2 * lam, beta * lam, lam, b2, beta, one])


def fit_cp(grid: CpGrid | None = None, beta_ref: float = 0.0) -> CpCoefficients:
    """Least-squares fit of the 9 Cp coefficients to :func:`cp_reference`.

    ``lambda_opt`` and ``cp_max`` are located by golden-section search of the
    fitted polynomial at ``beta_ref`` (the turbine's minimum pitch).
    """
    grid = grid or CpGrid()
    lam, beta = grid.points()
    if lam.size < 9:
        raise CpFitError(f"need at least 9 grid points, got {lam.size}")
    X = _design_matrix(lam, beta)
    if np.linalg.matrix_rank(X) < 9:
        raise CpFitError("rank-deficient Cp design matrix (grid must span both axes with >= 3 levels)")
    y = cp_reference(lam, beta)
    sol, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = X @ sol - y
    rmse = float(np.sqrt(np.mean(resid**2)))
    r2 = float(1.0 - np.sum(resid**2) / np.sum((y - y.mean()) ** 2))

    provisional = CpCoefficients(c=sol.reshape(3, 3), lambda_opt=1.0, cp_max=0.0)
    lo, hi = float(lam.min()), float(lam.max())
    res = minimize_scalar(lambda x: -_cp_raw(x, beta_ref, provisional),
                          bracket=_golden_bracket(provisional, beta_ref, lo, hi),
                          method="golden", tol=1e-10)
    lam_opt = float(res.x)
    cp_max = float(cp_eval(lam_opt, beta_ref, provisional))
    return CpCoefficients(c=sol.reshape(3, 3), lambda_opt=lam_opt, cp_max=cp_max, beta_ref=beta_ref,
                          rmse=rmse, r2=r2, max_abs_error=float(np.abs(resid).max()))


def _golden_bracket(coeffs, beta, lo, hi):
    xs = np.linspace(lo, hi, 181)
    ys = _cp_raw(xs, beta, coeffs)
    k = int(np.clip(np.argmax(ys), 1, xs.size - 2))
    return xs[k - 1], xs[k], xs[k + 1]


# -- power ------------------------------------------------------------------

def aero_power(v, omega, beta, params: TurbineParams):
    """Aerodynamic power 0.5*rho*A*v^3*Cp (W); exactly zero at zero wind."""
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    calm = v <= 0
    v_safe = np.where(calm, 1.0, v)
    lam = omega * params.rotor_radius / v_safe
    cp = np.maximum(_cp_raw(lam, beta, params.cp), 0.0)
    p = np.where(calm, 0.0, 0.5 * params.rho * params.swept_area * v_safe**3 * cp)
    return float(p) if p.ndim == 0 else p


def electrical_power(v, omega_prev, omega_now, beta, dt, params: TurbineParams):
    """Swing-equation output: aerodynamic power minus the backward-difference inertial term."""
    omega_now = np.asarray(omega_now, dtype=float)
    inertial = params.inertia_J * omega_now * (omega_now - omega_prev) / dt
    out = aero_power(v, omega_now, beta, params) - inertial
    return float(out) if np.ndim(out) == 0 else out


def mppt_reference(v: float, params: TurbineParams) -> tuple[float, float]:
    omega = float(params.omega_mpp(v))
    p = min(aero_power(v, omega, params.beta_min, params), params.rated_power)
    return omega, float(p)


def kinetic_headroom(omega_prev, omega_mpp, dt, inertia_J):
    return 0.5 * inertia_J * (np.square(omega_prev) - np.square(omega_mpp)) / dt


# -- inverse rotor dynamics -----------------------------------------------

class RotorStep(NamedTuple):
    omega: float
    clamped: bool
    feasible: bool


_BRACKET_MARGIN = 0.5
_MAX_ITER = 50
_SCAN_POINTS = 81


def step_rotor(v: float, beta: float, p_e_command: float, omega_prev: float, dt: float,
               params: TurbineParams, tol: float = 1e-3) -> RotorStep:
    """Rotor speed whose swing-equation output equals ``p_e_command``.

    Output falls with speed once the inertial term dominates, and the
    physical root is the highest-speed one, on that falling branch. It is
    bracketed by a scan over ``[omega_min - 0.5, omega_max + 0.5]`` and
    refined by Newton's method with a bisection fallback. Commands above
    every reachable output return the output-maximising speed with
    ``feasible=False``; commands still below the output at
    ``omega_max + 0.5`` return ``omega_max``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    J = params.inertia_J
    R = params.rotor_radius
    K = 0.5 * params.rho * params.swept_area
    a_l, b_l, c_l = (float(x) for x in params.cp.lambda_poly(beta))

    def resid(w):
        return electrical_power(v, omega_prev, w, beta, dt, params) - p_e_command

    def dresid(w):
        d_inertial = J * (2.0 * w - omega_prev) / dt
        if v <= 0:
            return -d_inertial
        lam = w * R / v
        if (a_l * lam + b_l) * lam + c_l <= 0:
            return -d_inertial
        return K * v**3 * (2.0 * a_l * lam + b_l) * R / v - d_inertial

    lo = max(params.omega_min - _BRACKET_MARGIN, 1e-6)
    hi = params.omega_max + _BRACKET_MARGIN
    # the zero clamp on Cp bends the residual, so the falling branch is located
    # on a grid: the physical root lies right of the last non-negative sample
    grid = np.linspace(lo, hi, _SCAN_POINTS)
    f_grid = electrical_power(v, omega_prev, grid, beta, dt, params) - p_e_command
    if f_grid[-1] >= 0:
        return RotorStep(params.omega_max, True, False)
    above = np.flatnonzero(f_grid >= 0)
    if above.size == 0:
        # command exceeds anything reachable: settle at the output-maximising speed
        j = int(np.argmax(f_grid))
        res = minimize_scalar(lambda w: -resid(w), bounds=(grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]),
                              method="bounded", options={"xatol": 1e-9})
        best = float(res.x) if -res.fun >= f_grid[j] else float(grid[j])
        return RotorStep(min(max(best, params.omega_min), params.omega_max), True, False)
    k = int(above[-1])
    lo, hi = float(grid[k]), float(grid[k + 1])

    a, b = lo, hi
    w = min(max(omega_prev, a), b)
    f = resid(w)
    for _ in range(_MAX_ITER):
        if abs(f) <= tol:
            break
        if f > 0:
            a = w
        else:
            b = w
        d = dresid(w)
        w_new = w - f / d if d < 0 else None
        if w_new is None or not (a < w_new < b):
            w_new = 0.5 * (a + b)
        w = w_new
        f = resid(w)

    clamped = w < params.omega_min or w > params.omega_max
    w = min(max(w, params.omega_min), params.omega_max)
    return RotorStep(float(w), clamped, True)
