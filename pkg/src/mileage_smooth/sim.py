"""Scenario engine: traces, the receding-horizon loop, the MPPT baseline and summaries."""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cascade import TrackingOutcome, pitch_from_cp, track_step
from .market import DEFAULT_UNITS, AgcUnit, MeritOrder, step_mileage_penalty
from .mpc import (SolverConfig, build_problem, evaluate_horizon, solve_horizon)
from .turbine import (CpGrid, TurbineParams, TurbineState, aero_power, electrical_power,
                      fit_cp, step_rotor)

log = logging.getLogger(__name__)

J_PER_KWH = 3.6e6


class ConfigError(ValueError):
    pass


class TraceParseError(ConfigError):
    pass


# -- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class OUSpec:
    mean: float
    stdev: float
    correlation_time: float
    seed: int

    def __post_init__(self):
        if self.stdev < 0:
            raise ConfigError("synthetic trace stdev must be >= 0")
        if not self.correlation_time > 0:
            raise ConfigError("synthetic trace correlation_time must be > 0")


@dataclass(frozen=True)
class TraceSource:
    path: Path | None = None
    columns: tuple[str, ...] | None = None
    synthetic: OUSpec | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    params: TurbineParams
    n_turbines: int = 4
    units: tuple[AgcUnit, ...] = DEFAULT_UNITS
    alpha: float = 0.3
    dt: float = 4.0
    horizon_steps: int = 10
    duration_s: float = 3600.0
    wind: TraceSource = TraceSource(synthetic=OUSpec(9.0, 1.5, 60.0, 42))
    imbalance: TraceSource = TraceSource(synthetic=OUSpec(0.0, 0.0, 60.0, 43))
    schedule_interval_s: float = 300.0
    forecast_mode: str = "perfect"
    forecast_noise_stdev: float = 0.0
    forecast_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    cascade_substeps: int = 1
    out_dir: Path = Path("out")
    include_timing: bool = False

    def __post_init__(self):
        if self.n_turbines < 1:
            raise ConfigError("turbine count must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must be in [0, 1]")
        if self.horizon_steps < 1:
            raise ConfigError("horizon_steps must be >= 1")
        if self.forecast_mode not in ("perfect", "persistence"):
            raise ConfigError(f"unknown forecast mode {self.forecast_mode!r}")
        if self.cascade_substeps < 1:
            raise ConfigError("cascade_substeps must be >= 1")
        if not self.units:
            raise ConfigError("at least one AGC unit required")


_TURBINE_KEYS = ("rho", "rotor_radius", "inertia_J", "rated_power", "omega_min", "omega_max",
                 "beta_min", "beta_max", "pitch_rate_max")


def apply_overrides(raw: dict, alpha=None, horizon=None, seed=None, out=None) -> dict:
    """Return a copy of a raw config document with CLI flag values written into its leaves."""
    doc = copy.deepcopy(raw)
    if alpha is not None:
        doc["alpha"] = float(alpha)
    if horizon is not None:
        doc["horizon_steps"] = int(horizon)
    if seed is not None:
        doc["seed"] = int(seed)
    if out is not None:
        doc.setdefault("output", {})["dir"] = str(out)
    return doc


def _ou_spec(d: dict, default_seed: int) -> OUSpec:
    try:
        return OUSpec(mean=float(d.get("mean", 0.0)), stdev=float(d.get("stdev", 0.0)),
                      correlation_time=float(d.get("correlation_time", 60.0)),
                      seed=int(d.get("seed", default_seed)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad synthetic trace spec: {exc}") from exc


def _trace_source(d, base_dir: Path, default_seed: int, default: TraceSource) -> TraceSource:
    if d is None:
        return default
    if not isinstance(d, dict):
        raise ConfigError("trace source must be an object")
    if "path" in d:
        path = Path(d["path"])
        if not path.is_absolute():
            path = base_dir / path
        cols = d.get("columns")
        return TraceSource(path=path, columns=tuple(cols) if cols else None)
    if "synthetic" in d:
        return TraceSource(synthetic=_ou_spec(d["synthetic"], default_seed))
    if d.get("zero"):
        return TraceSource(synthetic=OUSpec(0.0, 0.0, 1.0, default_seed))
    raise ConfigError("trace source needs 'path', 'synthetic' or 'zero'")


def config_from_dict(doc: dict, base_dir: Path | str = ".") -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from a parsed JSON document.

    The top-level ``seed`` seeds synthetic traces that do not carry their own:
    the wind trace uses ``seed``, the imbalance trace ``seed + 1``.
    """
    base_dir = Path(base_dir)
    try:
        seed = int(doc.get("seed", 42))
        tdoc = dict(doc.get("turbine", {}))
        n = int(tdoc.pop("count", 4))
        unknown = set(tdoc) - set(_TURBINE_KEYS)
        if unknown:
            raise ConfigError(f"unknown turbine keys: {sorted(unknown)}")
        grid = CpGrid(**doc.get("cp_grid", {}))
        cp = fit_cp(grid, beta_ref=float(tdoc.get("beta_min", 0.0)))
        params = TurbineParams(cp=cp, **{k: float(v) for k, v in tdoc.items()})
        units = tuple(AgcUnit(int(u["id"]), float(u["perf_score"]), float(u["offer_price"]),
                              float(u["capacity"])) for u in doc.get("units", [])) or DEFAULT_UNITS
        fdoc = doc.get("forecast", {})
        sdoc = doc.get("solver", {})
        odoc = doc.get("output", {})
        out_dir = Path(odoc.get("dir", "out"))
        if not out_dir.is_absolute():
            out_dir = base_dir / out_dir
        return ScenarioConfig(
            params=params, n_turbines=n, units=units,
            alpha=float(doc.get("alpha", 0.3)), dt=float(doc.get("dt", 4.0)),
            horizon_steps=int(doc.get("horizon_steps", 10)),
            duration_s=float(doc.get("duration_s", 3600.0)),
            wind=_trace_source(doc.get("wind"), base_dir, seed,
                               TraceSource(synthetic=OUSpec(9.0, 1.5, 60.0, seed))),
            imbalance=_trace_source(doc.get("imbalance"), base_dir, seed + 1,
                                    TraceSource(synthetic=OUSpec(0.0, 0.0, 60.0, seed + 1))),
            schedule_interval_s=float(doc.get("schedule_interval_s", 300.0)),
            forecast_mode=str(fdoc.get("mode", "perfect")),
            forecast_noise_stdev=float(fdoc.get("noise_stdev", 0.0)),
            forecast_seed=int(fdoc.get("seed", seed + 2)),
            solver=SolverConfig(**sdoc),
            cascade_substeps=int(doc.get("cascade_substeps", 1)),
            out_dir=out_dir, include_timing=bool(odoc.get("include_timing", False)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: Path | str, **overrides) -> ScenarioConfig:
    """Read a JSON scenario file; raises ``OSError`` when unreadable, ``ConfigError`` when invalid."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(apply_overrides(doc, **overrides), path.parent)


# -- traces -------------------------------------------------------------------

def ou_series(n: int, dt: float, spec: OUSpec) -> np.ndarray:
    """Exactly discretized Ornstein-Uhlenbeck samples, starting from a stationary draw."""
    rng = np.random.default_rng(spec.seed)
    decay = math.exp(-dt / spec.correlation_time)
    kick = spec.stdev * math.sqrt(1.0 - decay * decay)
    noise = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = spec.mean + spec.stdev * noise[0]
    for k in range(1, n):
        x[k] = spec.mean + (x[k - 1] - spec.mean) * decay + kick * noise[k]
    return x


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TraceParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "t_s":
        raise TraceParseError(f"{path}:1: header must start with 't_s' followed by value columns")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise TraceParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise TraceParseError(f"{path}:{lineno}: non-numeric cell") from None
        if not all(math.isfinite(v) for v in vals):
            raise TraceParseError(f"{path}:{lineno}: non-finite value")
        if data and vals[0] <= data[-1][0]:
            raise TraceParseError(f"{path}:{lineno}: timestamps must increase monotonically")
        data.append(vals)
    if not data:
        raise TraceParseError(f"{path}: no data rows")
    return header, np.array(data)


def _resample(t: np.ndarray, values: np.ndarray, dt: float) -> np.ndarray:
    n = int(math.floor((t[-1] - t[0]) / dt + 1e-9)) + 1
    grid = t[0] + dt * np.arange(n)
    return np.column_stack([np.interp(grid, t, values[:, j]) for j in range(values.shape[1])])


def load_wind_series(path: Path | str, n_turbines: int, dt: float,
                     columns: Sequence[str] | None = None) -> np.ndarray:
    """Per-turbine wind speeds, shape (samples, n_turbines), uniformly resampled to ``dt``.

    A single speed column is broadcast to every turbine.
    """
    path = Path(path)
    header, data = _read_csv(path)
    names = header[1:]
    if columns:
        missing = [c for c in columns if c not in names]
        if missing:
            raise TraceParseError(f"{path}: missing columns {missing}")
        idx = [names.index(c) + 1 for c in columns]
    else:
        idx = list(range(1, len(header)))
    series = _resample(data[:, 0], data[:, idx], dt)
    if np.any(series < 0):
        raise TraceParseError(f"{path}: negative wind speed")
    if series.shape[1] == 1:
        return np.repeat(series, n_turbines, axis=1)
    if series.shape[1] != n_turbines:
        raise TraceParseError(f"{path}: {series.shape[1]} speed columns for {n_turbines} turbines")
    return series


def load_imbalance_series(path: Path | str, dt: float) -> np.ndarray:
    path = Path(path)
    header, data = _read_csv(path)
    if len(header) != 2:
        raise TraceParseError(f"{path}:1: imbalance file needs exactly 't_s,imbalance_mw'")
    return _resample(data[:, 0], data[:, 1:], dt)[:, 0]


def write_trace_csv(path: Path | str, dt: float, columns: dict[str, np.ndarray]) -> None:
    path = Path(path)
    n = len(next(iter(columns.values())))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", *columns])
        for k in range(n):
            w.writerow([repr(k * dt), *(repr(float(c[k])) for c in columns.values())])


# -- prepared inputs ------------------------------------------------------------

@dataclass
class PreparedScenario:
    wind: np.ndarray            # (S, N) realized
    wind_forecast: np.ndarray   # (S, N)
    imbalance: np.ndarray       # (S,) MW realized
    imbalance_forecast: np.ndarray
    schedule: np.ndarray        # (S,) W
    initial_states: list[TurbineState]

    @property
    def samples(self) -> int:
        return self.wind.shape[0]


def _n_samples(cfg: ScenarioConfig) -> int:
    return int(math.floor(cfg.duration_s / cfg.dt + 1e-9)) + 1


def _trace(src: TraceSource, cfg: ScenarioConfig, wind: bool) -> np.ndarray:
    if src.path is not None:
        if wind:
            return load_wind_series(src.path, cfg.n_turbines, cfg.dt, src.columns)
        return load_imbalance_series(src.path, cfg.dt)
    x = ou_series(_n_samples(cfg), cfg.dt, src.synthetic)
    if wind:
        return np.repeat(np.maximum(x, 0.0)[:, None], cfg.n_turbines, axis=1)
    return x


def farm_mppt_power(wind: np.ndarray, params: TurbineParams) -> np.ndarray:
    om = params.omega_mpp(wind)
    return np.minimum(aero_power(wind, om, params.beta_min, params), params.rated_power).sum(axis=-1)


def wind_schedule(wind_forecast: np.ndarray, params: TurbineParams, dt: float, interval_s: float) -> np.ndarray:
    """Scheduled farm output: block means of forecast MPPT power over ``interval_s`` blocks (W)."""
    avail = farm_mppt_power(wind_forecast, params)
    block = max(1, int(round(interval_s / dt)))
    out = np.empty_like(avail)
    for start in range(0, avail.size, block):
        out[start:start + block] = avail[start:start + block].mean()
    return out


def steady_state(v: float, params: TurbineParams) -> TurbineState:
    """Turbine at rest on its MPPT curve, pitched just enough to respect rating."""
    omega = float(params.omega_mpp(v))
    beta = params.beta_min
    p = aero_power(v, omega, beta, params)
    if p > params.rated_power and v > 0:
        lam = omega * params.rotor_radius / v
        target = params.rated_power / (0.5 * params.rho * params.swept_area * v**3)
        beta = pitch_from_cp(target, lam, params.cp, params.beta_min, params.beta_max).beta
        p = aero_power(v, omega, beta, params)
    return TurbineState(omega, beta, float(p))


def prepare(cfg: ScenarioConfig) -> PreparedScenario:
    wind = _trace(cfg.wind, cfg, wind=True)
    imb = _trace(cfg.imbalance, cfg, wind=False)
    n = min(wind.shape[0], imb.shape[0], _n_samples(cfg))
    if n < 2:
        raise ConfigError("trace shorter than 2 steps")
    wind, imb = wind[:n], imb[:n]
    wind_fc = wind.copy()
    if cfg.forecast_noise_stdev > 0:
        rng = np.random.default_rng(cfg.forecast_seed)
        wind_fc = np.maximum(wind_fc + rng.normal(0.0, cfg.forecast_noise_stdev, wind.shape), 0.0)
    schedule = wind_schedule(wind_fc, cfg.params, cfg.dt, cfg.schedule_interval_s)
    states = [steady_state(float(v), cfg.params) for v in wind[0]]
    return PreparedScenario(wind, wind_fc, imb, imb.copy(), schedule, states)


# -- records --------------------------------------------------------------------

@dataclass
class StepRecord:
    t: float
    v: tuple[float, ...]
    omega: tuple[float, ...]
    beta: tuple[float, ...]
    p_e: tuple[float, ...]
    command: tuple[float, ...]
    pre_pitch_omega: tuple[float, ...]
    pitch: tuple[bool, ...]
    clamped: tuple[bool, ...]
    farm_p_e: float
    schedule: float
    imbalance: float
    net_imbalance: float
    g: tuple[float, ...]
    gamma: float
    dispatch_residual: float
    saturated: bool
    penalty: float           # ($/MW * MW)^2 * s over the step
    settlement: float        # $ movement cost of the step
    eq4_residual: float      # W, max over the solved window
    iterations: int = 0
    converged: bool = True
    solve_time: float = 0.0

    PER_TURBINE = ("v", "omega", "beta", "p_e", "command", "pre_pitch_omega", "pitch", "clamped")
    TIMING = ("solve_time",)

    @classmethod
    def columns(cls, n_turbines: int, n_units: int, include_timing: bool = False) -> list[str]:
        cols = ["t"]
        for name in cls.PER_TURBINE:
            cols += [f"{name}_t{i + 1}" for i in range(n_turbines)]
        cols += ["farm_p_e", "schedule", "imbalance", "net_imbalance"]
        cols += [f"g_u{j + 1}" for j in range(n_units)]
        cols += ["gamma", "dispatch_residual", "saturated", "penalty", "settlement", "eq4_residual",
                 "iterations", "converged"]
        if include_timing:
            cols += list(cls.TIMING)
        return cols

    def row(self, include_timing: bool = False) -> list[str]:
        out = [_fmt(self.t)]
        for name in self.PER_TURBINE:
            out += [_fmt(x) for x in getattr(self, name)]
        out += [_fmt(x) for x in (self.farm_p_e, self.schedule, self.imbalance, self.net_imbalance)]
        out += [_fmt(x) for x in self.g]
        out += [_fmt(x) for x in (self.gamma, self.dispatch_residual, self.saturated, self.penalty,
                                  self.settlement, self.eq4_residual, self.iterations, self.converged)]
        if include_timing:
            out.append(_fmt(self.solve_time))
        return out


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_records_csv(path: Path | str, records: Sequence[StepRecord], include_timing: bool = False) -> None:
    if not records:
        raise ValueError("no records")
    n, u = len(records[0].v), len(records[0].g)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(StepRecord.columns(n, u, include_timing))
        for r in records:
            w.writerow(r.row(include_timing))


def read_records_csv(path: Path | str) -> dict[str, np.ndarray]:
    """Step-record CSV as a column name -> float array mapping."""
    header, data = _read_records(Path(path))
    return {name: data[:, j] for j, name in enumerate(header)}


def _read_records(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise TraceParseError(f"{path}: no step records")
    header = rows[0]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise TraceParseError(f"{path}: {exc}") from None
    return header, data


# -- summary --------------------------------------------------------------------

@dataclass
class SimulationSummary:
    mode: str
    alpha: float | None
    steps: int
    dt: float
    energy_kwh: float
    mileage_settlement: float
    mileage_quadratic: float
    farm_total_variation_mw: float
    saturation_steps: int
    clamped_steps: int
    pitch_steps: int
    unconverged_solves: int
    eq4_max_residual_w: float
    mean_solve_time: float = 0.0
    max_solve_time: float = 0.0

    TIMING = ("mean_solve_time", "max_solve_time")

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if not include_timing:
            for k in self.TIMING:
                d.pop(k)
        return d


def summarize(records: Sequence[StepRecord], mode: str, alpha: float | None, dt: float,
              prev_farm: float | None = None) -> SimulationSummary:
    """Totals over a record series; every record stands for one ``dt`` interval.

    ``prev_farm`` is the farm output just before the first record, used for
    the total-variation metric so that split series add up.
    """
    if not records:
        raise ValueError("no records to summarize")
    farm = np.array([r.farm_p_e for r in records])
    first = farm[0] if prev_farm is None else prev_farm
    tv = float(np.abs(np.diff(farm, prepend=first)).sum()) * 1e-6
    times = [r.solve_time for r in records]
    return SimulationSummary(
        mode=mode, alpha=alpha, steps=len(records), dt=dt,
        energy_kwh=float(farm.sum() * dt / J_PER_KWH),
        mileage_settlement=float(sum(r.settlement for r in records)),
        mileage_quadratic=float(sum(r.penalty for r in records)),
        farm_total_variation_mw=tv,
        saturation_steps=sum(r.saturated for r in records),
        clamped_steps=sum(any(r.clamped) for r in records),
        pitch_steps=sum(any(r.pitch) for r in records),
        unconverged_solves=sum(not r.converged for r in records),
        eq4_max_residual_w=float(max(r.eq4_residual for r in records)),
        mean_solve_time=float(np.mean(times)), max_solve_time=float(np.max(times)),
    )


def write_summary_json(path: Path | str, summary: SimulationSummary, include_timing: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(include_timing), fh, indent=2)
        fh.write("\n")


# -- simulation loop ------------------------------------------------------------

def _mppt_track(state: TurbineState, v: float, dt: float, params: TurbineParams, substeps: int) -> TrackingOutcome:
    """Free-running MPPT: move straight to the optimal speed, pitch only to respect rating."""
    omega = float(params.omega_mpp(v))
    beta = max(params.beta_min, state.beta - params.pitch_rate_max * dt)
    if aero_power(v, omega, beta, params) > params.rated_power:
        return track_step(params.rated_power, state, v, dt, params, substeps)
    p = electrical_power(v, state.omega, omega, beta, dt, params)
    if p < 0:
        # acceleration limited so the turbine never motors
        omega = step_rotor(v, beta, 0.0, state.omega, dt, params).omega
        p = electrical_power(v, state.omega, omega, beta, dt, params)
    return TrackingOutcome(TurbineState(omega, beta, p), p, False, False, omega)


@dataclass
class _Loop:
    cfg: ScenarioConfig
    prep: PreparedScenario
    merit: MeritOrder = field(init=False)

    def __post_init__(self):
        self.merit = MeritOrder(self.cfg.units)

    def record(self, k, outcomes, commands, prev_g, eq4=0.0, iterations=0, converged=True, solve_time=0.0):
        prep = self.prep
        farm = float(sum(o.achieved_p_e for o in outcomes))
        net = float(prep.imbalance[k]) - (farm - float(prep.schedule[k])) * 1e-6
        d = self.merit.dispatch(net)
        g = np.asarray(d.g)
        rec = StepRecord(
            t=k * self.cfg.dt,
            v=tuple(float(x) for x in prep.wind[k]),
            omega=tuple(o.new_state.omega for o in outcomes),
            beta=tuple(o.new_state.beta for o in outcomes),
            p_e=tuple(o.achieved_p_e for o in outcomes),
            command=tuple(float(c) for c in commands),
            pre_pitch_omega=tuple(o.pre_pitch_omega for o in outcomes),
            pitch=tuple(o.used_pitch for o in outcomes),
            clamped=tuple(o.clamped for o in outcomes),
            farm_p_e=farm, schedule=float(prep.schedule[k]), imbalance=float(prep.imbalance[k]),
            net_imbalance=net, g=d.g, gamma=d.gamma, dispatch_residual=d.residual,
            saturated=not d.feasible,
            penalty=step_mileage_penalty(d.gamma, g) * self.cfg.dt,
            settlement=d.gamma * float(np.abs(g - prev_g).sum()),
            eq4_residual=eq4, iterations=iterations, converged=converged, solve_time=solve_time,
        )
        return rec, g

    def forecasts(self, k):
        prep = self.prep
        if self.cfg.forecast_mode == "persistence":
            wind = prep.wind_forecast.copy()
            wind[k + 1:] = prep.wind[k]
            imb = prep.imbalance_forecast.copy()
            imb[k + 1:] = prep.imbalance[k]
            return wind, imb
        return prep.wind_forecast, prep.imbalance_forecast


def run_scenario(cfg: ScenarioConfig, prep: PreparedScenario | None = None
                 ) -> tuple[list[StepRecord], SimulationSummary]:
    """Receding-horizon run: solve, apply the first command through the cascade, dispatch, log."""
    prep = prep or prepare(cfg)
    loop = _Loop(cfg, prep)
    p = cfg.params
    states = list(prep.initial_states)
    prev_g = np.zeros(len(cfg.units))
    warm = None
    records = []
    for k in range(prep.samples - 1):
        wind_fc, imb_fc = loop.forecasts(k)
        prob = build_problem(states, wind_fc, imb_fc, prep.schedule, k, cfg.horizon_steps,
                             cfg.dt, cfg.alpha, cfg.units, p)
        if warm is not None:
            warm = warm.shifted(prob.horizon_steps)
        traj, rep = solve_horizon(prob, warm, cfg.solver)
        warm = traj
        commands = evaluate_horizon(traj, prob, cfg.solver.penalty_weight).p_e[0]
        outcomes = [track_step(float(c), s, float(v), cfg.dt, p, cfg.cascade_substeps)
                    for c, s, v in zip(commands, states, prep.wind[k + 1])]
        states = [o.new_state for o in outcomes]
        rec, prev_g = loop.record(k + 1, outcomes, commands, prev_g, rep.constraint_violation,
                                  rep.iterations, rep.converged, rep.wall_time)
        records.append(rec)
    log.info("proposed run alpha=%s: %d steps", cfg.alpha, len(records))
    return records, summarize(records, "proposed", cfg.alpha, cfg.dt,
                              prev_farm=sum(s.p_e for s in prep.initial_states))


def run_mppt_baseline(cfg: ScenarioConfig, prep: PreparedScenario | None = None
                      ) -> tuple[list[StepRecord], SimulationSummary]:
    """Same loop with every turbine free-running on its MPPT curve; no optimizer."""
    prep = prep or prepare(cfg)
    loop = _Loop(cfg, prep)
    p = cfg.params
    states = list(prep.initial_states)
    prev_g = np.zeros(len(cfg.units))
    records = []
    for k in range(prep.samples - 1):
        v_next = prep.wind[k + 1]
        commands = [min(aero_power(float(v), float(p.omega_mpp(v)), p.beta_min, p), p.rated_power)
                    for v in v_next]
        outcomes = [_mppt_track(s, float(v), cfg.dt, p, cfg.cascade_substeps)
                    for s, v in zip(states, v_next)]
        states = [o.new_state for o in outcomes]
        rec, prev_g = loop.record(k + 1, outcomes, commands, prev_g)
        records.append(rec)
    return records, summarize(records, "mppt", None, cfg.dt,
                              prev_farm=sum(s.p_e for s in prep.initial_states))
