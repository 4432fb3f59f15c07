"""Receding-horizon smoothing optimizer.

Decision variables are per-turbine rotor speed and pitch trajectories over
the look-ahead window; electrical output follows from the swing equation,
so the speed and pitch limits are plain boxes. The objective weighs
normalized harvested energy against the normalized quadratic mileage
penalty of the regulation dispatch that the farm's deviation causes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .market import AgcUnit, MeritOrder
from .turbine import TurbineParams, TurbineState, aero_power

WH_PER_J = 1.0 / 3600.0
PRECOND_FLOOR = 1e-2
EQ4_TOLERANCE = 0.005     # fraction of rated power
CONTINUATION_ROUNDS = 3


class SolverConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 200
    tol: float = 1e-6
    patience: int = 3
    time_budget: float = 5.0
    armijo_c: float = 1e-4
    max_backtracks: int = 30
    fd_rel_step: float = 1e-4
    penalty_weight: float = 1e3
    oracle_grid: int = 50

    def validate(self):
        if not self.time_budget > 0:
            raise SolverConfigError("time_budget must be positive")
        if self.max_iter < 1 or self.patience < 1 or self.max_backtracks < 1:
            raise SolverConfigError("iteration limits must be >= 1")


@dataclass
class HorizonProblem:
    t0: float
    dt: float
    alpha: float
    wind_forecast: np.ndarray          # (T, N) m/s
    imbalance_forecast: np.ndarray     # (T,) MW, P_load - P_scheduled
    schedule: np.ndarray               # (T,) W, scheduled farm output
    initial_states: Sequence[TurbineState]
    units: Sequence[AgcUnit]
    params: TurbineParams
    e_base: float                      # Wh
    c_base: float                      # $
    merit: MeritOrder = field(init=False, repr=False)

    def __post_init__(self):
        self.wind_forecast = np.atleast_2d(np.asarray(self.wind_forecast, dtype=float))
        self.imbalance_forecast = np.asarray(self.imbalance_forecast, dtype=float).reshape(-1)
        self.schedule = np.asarray(self.schedule, dtype=float).reshape(-1)
        T = self.wind_forecast.shape[0]
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")
        if T < 1:
            raise ValueError("horizon must contain at least one step")
        if self.imbalance_forecast.shape != (T,) or self.schedule.shape != (T,):
            raise ValueError("forecast lengths differ from horizon")
        if self.wind_forecast.shape[1] != len(self.initial_states):
            raise ValueError("wind forecast columns must match turbine count")
        if not (self.e_base > 0 and self.c_base > 0):
            raise ValueError("normalization bases must be positive")
        self.merit = MeritOrder(self.units)
        p = self.params
        self.omega0 = np.array([s.omega for s in self.initial_states])
        self.beta0 = np.array([s.beta for s in self.initial_states])
        self.omega_mpp = p.omega_mpp(self.wind_forecast)
        self.p_mpp = np.minimum(aero_power(self.wind_forecast, self.omega_mpp, p.beta_min, p), p.rated_power)

    @property
    def horizon_steps(self) -> int:
        return self.wind_forecast.shape[0]

    @property
    def n_turbines(self) -> int:
        return self.wind_forecast.shape[1]


@dataclass
class DecisionTrajectory:
    omega: np.ndarray   # (T, N)
    beta: np.ndarray    # (T, N)

    def copy(self) -> "DecisionTrajectory":
        return DecisionTrajectory(self.omega.copy(), self.beta.copy())

    def shifted(self, horizon_steps: int) -> "DecisionTrajectory":
        """Drop the applied first step, duplicate the last, fit to ``horizon_steps``."""
        om = np.concatenate([self.omega[1:], self.omega[-1:]])
        be = np.concatenate([self.beta[1:], self.beta[-1:]])
        return _fit_horizon(DecisionTrajectory(om, be), horizon_steps)


@dataclass
class SolverReport:
    objective: float
    energy_term: float
    mileage_term: float
    penalty_term: float = 0.0
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    constraint_violation: float = 0.0


@dataclass
class HorizonEvaluation:
    """Per-step quantities derived from a trajectory."""
    p_e: np.ndarray          # (T, N) W
    farm: np.ndarray         # (T,) W
    net_imbalance: np.ndarray  # (T,) MW left for the AGC units
    g: np.ndarray            # (T, U) MW
    gamma: np.ndarray        # (T,) $/MW
    eq4_violation: np.ndarray  # (T, N) W


def build_problem(states: Sequence[TurbineState], wind: np.ndarray, imbalance: np.ndarray,
                  schedule: np.ndarray, k: int, horizon: int, dt: float, alpha: float,
                  units: Sequence[AgcUnit], params: TurbineParams) -> HorizonProblem:
    """Window problem at sample ``k``: plans samples ``k+1 .. k+T``.

    ``wind``/``imbalance``/``schedule`` are the forecast series for the whole
    run; the horizon is truncated at the end of the data.
    """
    wind = np.asarray(wind, dtype=float)
    T = min(horizon, wind.shape[0] - 1 - k)
    if T < 1:
        raise ValueError(f"no forecast data after sample {k}")
    sl = slice(k + 1, k + 1 + T)
    n = len(states)
    merit = MeritOrder(units)
    return HorizonProblem(
        t0=k * dt, dt=dt, alpha=alpha,
        wind_forecast=wind[sl], imbalance_forecast=np.asarray(imbalance)[sl],
        schedule=np.asarray(schedule)[sl], initial_states=list(states), units=list(units),
        params=params,
        e_base=n * params.rated_power * T * dt * WH_PER_J,
        c_base=merit.max_price * merit.total_capacity,
    )


# -- objective ---------------------------------------------------------------

def _evaluate(prob: HorizonProblem, omega: np.ndarray, beta: np.ndarray, penalty_weight: float):
    """Batched objective. ``omega``/``beta`` have shape (..., T, N)."""
    p = prob.params
    dt = prob.dt
    lead = omega.shape[:-2]
    omega_prev = np.concatenate([np.broadcast_to(prob.omega0, lead + (1, prob.n_turbines)),
                                 omega[..., :-1, :]], axis=-2)
    p_e = aero_power(prob.wind_forecast, omega, beta, p) - p.inertia_J * omega * (omega - omega_prev) / dt
    farm = p_e.sum(axis=-1)
    net = prob.imbalance_forecast - (farm - prob.schedule) * 1e-6
    g, gamma = prob.merit.dispatch_arrays(net)
    step_pen = np.sum(np.square(gamma[..., None] * g), axis=-1)

    energy_wh = farm.sum(axis=-1) * dt * WH_PER_J
    energy_term = energy_wh / prob.e_base
    mileage_term = step_pen.sum(axis=-1) * dt / prob.c_base**2

    upper = prob.p_mpp + 0.5 * p.inertia_J * (omega_prev**2 - prob.omega_mpp**2) / dt
    viol = np.maximum(p_e - upper, 0.0) + np.maximum(-p_e, 0.0)
    penalty = penalty_weight * np.sum(np.square(viol / p.rated_power), axis=(-2, -1))
    # imbalance beyond total AGC capacity cannot satisfy the power balance
    unmet = np.maximum(np.abs(net) - prob.merit.total_capacity, 0.0)
    penalty = penalty + penalty_weight * np.sum(np.square(unmet / prob.merit.total_capacity), axis=-1)

    obj = -prob.alpha * energy_term + (1.0 - prob.alpha) * mileage_term + penalty
    return obj, energy_term, mileage_term, penalty, (p_e, farm, net, g, gamma, viol)


def objective_eval(traj: DecisionTrajectory, prob: HorizonProblem,
                   penalty_weight: float = 1e3) -> SolverReport:
    """Scalar objective of one trajectory, with its energy and mileage parts."""
    if traj.omega.shape != prob.wind_forecast.shape or traj.beta.shape != prob.wind_forecast.shape:
        raise ValueError("trajectory dimensions do not match the problem")
    obj, e, m, pen, parts = _evaluate(prob, traj.omega, traj.beta, penalty_weight)
    return SolverReport(objective=float(obj), energy_term=float(e), mileage_term=float(m),
                        penalty_term=float(pen), constraint_violation=float(parts[5].max()))


def evaluate_horizon(traj: DecisionTrajectory, prob: HorizonProblem,
                     penalty_weight: float = 1e3) -> HorizonEvaluation:
    *_, (p_e, farm, net, g, gamma, viol) = _evaluate(prob, traj.omega, traj.beta, penalty_weight)
    return HorizonEvaluation(p_e, farm, net, g, gamma, viol)


# -- feasibility ------------------------------------------------------------

def project_feasible(traj: DecisionTrajectory, params: TurbineParams, dt: float,
                     beta0=None) -> DecisionTrajectory:
    """Clamp into the speed/pitch boxes and enforce the pitch-rate limit by forward sweep."""
    omega, beta = _project(traj.omega, traj.beta, params, dt, beta0)
    return DecisionTrajectory(omega, beta)


def _project(omega, beta, params: TurbineParams, dt, beta0=None):
    omega = np.clip(omega, params.omega_min, params.omega_max)
    beta = np.clip(beta, params.beta_min, params.beta_max)
    step = params.pitch_rate_max * dt
    out = beta.copy()
    prev = None if beta0 is None else np.asarray(beta0, dtype=float)
    for k in range(beta.shape[-2]):
        if prev is not None:
            out[..., k, :] = np.clip(out[..., k, :], prev - step, prev + step)
        prev = out[..., k, :]
    return omega, np.clip(out, params.beta_min, params.beta_max)


def mppt_trajectory(prob: HorizonProblem) -> DecisionTrajectory:
    omega = prob.omega_mpp.copy()
    beta = np.full_like(omega, prob.params.beta_min)
    return project_feasible(DecisionTrajectory(omega, beta), prob.params, prob.dt, prob.beta0)


def hold_trajectory(prob: HorizonProblem) -> DecisionTrajectory:
    """Rotor speed and pitch held at their initial values."""
    T = prob.horizon_steps
    omega = np.repeat(prob.omega0[None], T, axis=0)
    beta = np.repeat(prob.beta0[None], T, axis=0)
    return project_feasible(DecisionTrajectory(omega, beta), prob.params, prob.dt, prob.beta0)


# -- solver -----------------------------------------------------------------

def solve_horizon(prob: HorizonProblem, warm_start: DecisionTrajectory | None = None,
                  cfg: SolverConfig | None = None) -> tuple[DecisionTrajectory, SolverReport]:
    """Projected-gradient descent on the (omega, beta) trajectory.

    Work is done in box-normalized coordinates. Rotor speed is differentiated
    along increment directions (shifting omega from step j onward), because
    output at step j depends mostly on the speed change into that step; pitch
    along its own coordinates. One batch of central differences, with steps
    relative to each variable's box width, yields both the gradient and a
    diagonal curvature estimate used to scale the descent direction.

    The line search is Armijo backtracking by halving with every trial point
    projected; all trial lengths are evaluated together and the lowest
    acceptable one is taken. If the scaled direction finds no acceptable
    point, the plain projected gradient is tried before declaring a
    stationary point.

    The search starts from the best of the warm start, the MPPT trajectory
    and a hold-current-state trajectory. If the converged point still breaks
    the output bound by more than 0.5% of rating, the penalty weight is
    raised tenfold and descent resumes, at most three times.
    """
    cfg = cfg or SolverConfig()
    cfg.validate()
    start = time.perf_counter()
    p = prob.params
    dt = prob.dt
    T, N = prob.horizon_steps, prob.n_turbines
    lo = np.concatenate([np.full((T, N), p.omega_min), np.full((T, N), p.beta_min)])
    width = np.concatenate([np.full((T, N), p.omega_max - p.omega_min),
                            np.full((T, N), p.beta_max - p.beta_min)])

    def to_phys(u):
        x = lo + u * width
        return x[..., :T, :], x[..., T:, :]

    def to_unit(omega, beta):
        return (np.concatenate([omega, beta], axis=-2) - lo) / width

    def project_u(u):
        om, be = to_phys(u)
        om, be = _project(om, be, p, dt, prob.beta0)
        return to_unit(om, be)

    weight = cfg.penalty_weight

    def fobj(u):
        om, be = to_phys(u)
        return _evaluate(prob, om, be, weight)[0]

    def eq4_residual(u):
        om, be = to_phys(u)
        return float(_evaluate(prob, om, be, weight)[4][5].max())

    # direction basis: rows (j, i) of the speed block shift omega_i from step j on
    nvar = 2 * T * N
    basis = np.zeros((2 * T, N, 2 * T, N))
    for j in range(T):
        for i in range(N):
            basis[j, i, j:T, i] = 1.0
            basis[T + j, i, T + j, i] = 1.0
    basis = basis.reshape(nvar, 2 * T, N)
    h = cfg.fd_rel_step
    probes = basis * h

    def derivatives(u, f0):
        f = fobj(np.concatenate([u + probes, u - probes]))
        gd = (f[:nvar] - f[nvar:]) / (2 * h)
        cd = (f[:nvar] + f[nvar:] - 2 * f0) / (h * h)
        gd = gd.reshape(2 * T, N)
        # gradient in plain coordinates from the cumulative directional derivatives
        g = gd.copy()
        g[:T - 1] -= gd[1:T]
        return gd, cd.reshape(2 * T, N), g

    def to_plain(dz):
        du = dz.copy()
        du[:T] = np.cumsum(dz[:T], axis=0)
        return du

    halvings = 0.5 ** np.arange(cfg.max_backtracks)

    def line_search(u, f, direction, g):
        trials = project_u(u[None] + halvings[:, None, None] * direction[None])
        f_trials = fobj(trials)
        decrease = cfg.armijo_c * np.einsum("kij,ij->k", trials - u, g)
        ok = np.nonzero((f_trials <= f + decrease) & (f_trials < f))[0]
        if ok.size == 0:
            return None
        k = ok[np.argmin(f_trials[ok])]
        return trials[k], float(f_trials[k])

    candidates = [mppt_trajectory(prob), hold_trajectory(prob)]
    if warm_start is not None:
        candidates.insert(0, _fit_horizon(warm_start, T))
    starts = project_u(np.stack([to_unit(c.omega, c.beta) for c in candidates]))
    f_starts = fobj(starts)
    k0 = int(np.argmin(f_starts))
    u, f = starts[k0], float(f_starts[k0])

    it = 0

    def descend(u, f):
        nonlocal it
        stall = 0
        for _ in range(cfg.max_iter):
            if time.perf_counter() - start > cfg.time_budget:
                return u, f, False
            gd, cd, g = derivatives(u, f)
            it += 1
            step = line_search(u, f, to_plain(-gd / np.maximum(cd, PRECOND_FLOOR)), g)
            if step is None:
                step = line_search(u, f, -g / max(float(np.abs(g).max()), 1e-300), g)
            if step is None:
                return u, f, True
            u_new, f_new = step
            rel = (f - f_new) / max(abs(f), 1e-12)
            u, f = u_new, f_new
            stall = stall + 1 if rel < cfg.tol else 0
            if stall >= cfg.patience:
                return u, f, True
        return u, f, False

    u, f, converged = descend(u, f)
    # penalty continuation: stiffen the output-bound penalty until it holds
    limit = EQ4_TOLERANCE * p.rated_power
    for _ in range(CONTINUATION_ROUNDS):
        if eq4_residual(u) <= limit or time.perf_counter() - start > cfg.time_budget:
            break
        weight *= 10.0
        u, f, converged = descend(u, float(fobj(u)))

    omega, beta = to_phys(project_u(u))
    traj = DecisionTrajectory(omega, beta)
    report = objective_eval(traj, prob, cfg.penalty_weight)
    report.iterations = it
    report.converged = converged
    report.wall_time = time.perf_counter() - start
    return traj, report


def _fit_horizon(traj: DecisionTrajectory, T: int) -> DecisionTrajectory:
    om, be = traj.omega[:T], traj.beta[:T]
    if om.shape[0] < T:
        pad = T - om.shape[0]
        om = np.concatenate([om, np.repeat(om[-1:], pad, axis=0)])
        be = np.concatenate([be, np.repeat(be[-1:], pad, axis=0)])
    return DecisionTrajectory(om, be)


# -- brute force --------------------------------------------------------------

class OracleLimitError(ValueError):
    pass


def brute_force_oracle(prob: HorizonProblem, grid_res: int = 50,
                       penalty_weight: float = 1e3) -> tuple[float, DecisionTrajectory, int]:
    """Exhaustive grid minimum for one turbine over at most two steps.

    Returns ``(objective, trajectory, evaluations)`` where ``evaluations``
    counts the pitch-rate feasible grid combinations covered. Two-step
    problems are split into per-step tables so each combination costs a
    table lookup instead of a model evaluation.
    """
    T, N = prob.horizon_steps, prob.n_turbines
    if N != 1 or T > 2 or grid_res > 100:
        raise OracleLimitError("oracle limited to 1 turbine, T <= 2, grid_res <= 100")
    p = prob.params
    w = np.linspace(p.omega_min, p.omega_max, grid_res)
    b = np.linspace(p.beta_min, p.beta_max, grid_res)
    W, B = (a.ravel() for a in np.meshgrid(w, b, indexing="ij"))
    step = p.pitch_rate_max * prob.dt
    tol = 1e-9
    ok1 = np.abs(B - prob.beta0[0]) <= step + tol
    W1, B1 = W[ok1], B[ok1]
    if T == 1:
        f = _evaluate(prob, W1[:, None, None], B1[:, None, None], penalty_weight)[0]
        k = int(np.argmin(f))
        return float(f[k]), DecisionTrajectory(np.array([[W1[k]]]), np.array([[B1[k]]])), int(f.size)

    # Every objective term is a per-step sum and the second step sees the
    # first only through its speed, so with the reference pitch b[0]:
    # F(w1, b1, w2, b2) = F(w1, b1, ref) + F(w1, b[0], w2, b2) - F(w1, b[0], ref)
    G = grid_res
    ref_w, ref_b = w[0], b[0]
    first = _evaluate(prob, np.stack([W, np.full_like(W, ref_w)], -1)[..., None],
                      np.stack([B, np.full_like(B, ref_b)], -1)[..., None], penalty_weight)[0]
    first = first.reshape(G, G)                       # [w1, b1]
    w1, w2 = np.meshgrid(w, w, indexing="ij")
    om = np.stack([np.repeat(w1[:, :, None], G, 2), np.repeat(w2[:, :, None], G, 2)], -1)[..., None]
    be = np.stack([np.full((G, G, G), ref_b), np.broadcast_to(b, (G, G, G))], -1)[..., None]
    second = _evaluate(prob, om, be, penalty_weight)[0] - first[:, :1, None]   # [w1, w2, b2]
    k2 = np.argmin(second, axis=1)                    # best w2 per (w1, b2)
    m2 = np.take_along_axis(second, k2[:, None, :], axis=1)[:, 0, :]
    ok1 = np.abs(b - prob.beta0[0]) <= step + tol     # [b1]
    ok2 = np.abs(b[None, :] - b[:, None]) <= step + tol   # [b1, b2]
    total = first[:, :, None] + np.where(ok2[None], m2[:, None, :], np.inf)
    total[:, ~ok1, :] = np.inf
    i, j, k = np.unravel_index(int(np.argmin(total)), total.shape)
    traj = DecisionTrajectory(np.array([[w[i]], [w[k2[i, k]]]]), np.array([[b[j]], [b[k]]]))
    count = int(G * G * ok2[ok1].sum())
    best = (float(_evaluate(prob, traj.omega, traj.beta, penalty_weight)[0]), traj)
    return best[0], best[1], count
