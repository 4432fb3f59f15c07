"""Cascade tracking of a power command: rotor speed first, pitch last.

The rotor absorbs or releases kinetic energy to follow the command. Pitch
only acts once the rotor is pinned at its upper speed limit with surplus
aerodynamic power, and relaxes back toward minimum pitch whenever rotor
speed alone can follow the command.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .turbine import CpCoefficients, TurbineParams, TurbineState, electrical_power, step_rotor

SATURATION_BAND = 1e-3
ROOT_TOL = 1e-2


class PitchSolution(NamedTuple):
    beta: float
    in_range: bool


class TrackingOutcome(NamedTuple):
    new_state: TurbineState
    achieved_p_e: float
    used_pitch: bool
    clamped: bool
    pre_pitch_omega: float


def pitch_from_cp(cp_target: float, lam: float, coeffs: CpCoefficients,
                  beta_min: float = 0.0, beta_max: float = 25.0) -> PitchSolution:
    """Smallest pitch in ``[beta_min, beta_max]`` with ``Cp(lam, beta) == cp_target``.

    Unreachable targets return ``beta_min`` (target too high) or ``beta_max``
    (too low) with ``in_range=False``.
    """
    if lam <= 0:
        raise ValueError("tip-speed ratio must be positive")
    a, b, c = (float(x) for x in coeffs.beta_poly(lam))
    c -= cp_target
    roots = []
    if abs(a) < 1e-14:
        if b != 0:
            roots = [-c / b]
    else:
        disc = b * b - 4 * a * c
        if disc >= 0:
            q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
            roots = [q / a] + ([c / q] if q != 0 else [])
    tol = 1e-9
    inside = sorted(min(max(r, beta_min), beta_max) for r in roots if beta_min - tol <= r <= beta_max + tol)
    if inside:
        return PitchSolution(inside[0], True)
    ends = [beta_min, beta_max]
    if abs(a) > 1e-14 and beta_min < -b / (2 * a) < beta_max:
        ends.append(-b / (2 * a))
    values = [(a * x + b) * x + c for x in ends]
    # values are Cp(beta) - target; all positive means the target is below reach
    if min(values) > 0:
        return PitchSolution(beta_max, False)
    return PitchSolution(beta_min, False)


def _substep(command, omega_prev, beta, v, dt, params: TurbineParams):
    rate_step = params.pitch_rate_max * dt
    rs = step_rotor(v, beta, command, omega_prev, dt, params)
    used_pitch = False
    pre_pitch = rs.omega
    clamped = rs.clamped

    surplus = rs.clamped and rs.omega >= params.omega_max - SATURATION_BAND and v > 0
    if not rs.clamped or not surplus:
        # rotor control alone, or deficit: pitch relaxes toward minimum
        if beta > params.beta_min:
            relaxed = max(params.beta_min, beta - rate_step)
            rs2 = step_rotor(v, relaxed, command, omega_prev, dt, params)
            if not rs.clamped and not rs2.clamped:
                beta, rs = relaxed, rs2
            elif rs.clamped and not (rs2.clamped and rs2.omega >= params.omega_max - SATURATION_BAND):
                beta, rs = relaxed, rs2
                clamped = rs2.clamped
        return rs.omega, beta, used_pitch, clamped, pre_pitch

    w = params.omega_max
    lam = w * params.rotor_radius / v
    inertial = params.inertia_J * w * (w - omega_prev) / dt
    cp_target = max((command + inertial) / (0.5 * params.rho * params.swept_area * v**3), 0.0)
    target = pitch_from_cp(cp_target, lam, params.cp, params.beta_min, params.beta_max).beta
    new_beta = float(np.clip(target, beta - rate_step, beta + rate_step))
    new_beta = min(max(new_beta, params.beta_min), params.beta_max)
    used_pitch = new_beta > beta
    rs = step_rotor(v, new_beta, command, omega_prev, dt, params)
    return rs.omega, new_beta, used_pitch, rs.clamped, pre_pitch


def track_step(command: float, state: TurbineState, v: float, dt: float,
               params: TurbineParams, substeps: int = 1) -> TrackingOutcome:
    """Follow ``command`` (W) for one control cycle of length ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    h = dt / substeps
    omega, beta = state.omega, state.beta
    energy = 0.0
    used_pitch = clamped = False
    pre_pitch = omega
    for _ in range(substeps):
        omega_new, beta, pitched, cl, pre = _substep(command, omega, beta, v, h, params)
        energy += electrical_power(v, omega, omega_new, beta, h, params) * h
        if not used_pitch:
            pre_pitch = pre
        used_pitch |= pitched
        clamped |= cl
        omega = omega_new
    achieved = energy / dt
    if -ROOT_TOL < achieved < 0:
        achieved = 0.0  # root-finder round-off on a zero command
    return TrackingOutcome(TurbineState(omega, beta, achieved), achieved, used_pitch, clamped, pre_pitch)
