"""Command-line entry point.

Subcommands: ``run``, ``baseline``, ``pareto``, ``fit-cp`` and ``plot``.
Exit status is 0 on success, 1 on configuration or parse errors (including
bad flags) and 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .sim import (ConfigError, ScenarioConfig, SimulationSummary, TraceParseError, apply_overrides,
                  config_from_dict, load_config, prepare, read_records_csv, run_mppt_baseline,
                  run_scenario, write_records_csv, write_summary_json)
from .mpc import SolverConfigError
from .turbine import CpFitError, CpGrid, fit_cp

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2
THREADS_ENV = "MILEAGE_SMOOTH_THREADS"

FRONT_COLUMNS = ("alpha", "energy_kwh", "mileage_settlement", "mileage_quadratic",
                 "farm_total_variation_mw", "unconverged_solves")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _alpha_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty alpha list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mileage-smooth", description="Mileage-aware wind farm power smoothing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_flags(p, alpha=True):
        p.add_argument("--config", type=Path, help="scenario JSON (defaults apply when omitted)")
        if alpha:
            p.add_argument("--alpha", type=float)
        p.add_argument("--horizon", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, help="output directory")

    scenario_flags(sub.add_parser("run", help="proposed controller vs. MPPT baseline"))
    scenario_flags(sub.add_parser("baseline", help="MPPT baseline only"), alpha=False)
    p = sub.add_parser("pareto", help="sweep alpha and write the trade-off front")
    scenario_flags(p, alpha=False)
    p.add_argument("--alphas", type=_alpha_list, default=[0.2, 0.5, 0.8])

    p = sub.add_parser("fit-cp", help="fit the Cp polynomial and print coefficients as JSON")
    p.add_argument("--config", type=Path, help="scenario JSON whose cp_grid is used")
    p.add_argument("--out", type=Path, help="also write the JSON to DIR/cp_fit.json")

    p = sub.add_parser("plot", help="render step records to SVG")
    p.add_argument("records", type=Path, help="step-record CSV")
    p.add_argument("--baseline", type=Path, help="MPPT step-record CSV drawn for comparison")
    p.add_argument("--out", type=Path, help="output directory (default: next to the records)")
    return parser


def _load(args, alpha=None) -> ScenarioConfig:
    overrides = dict(alpha=alpha, horizon=args.horizon, seed=args.seed, out=args.out)
    if args.config is None:
        return config_from_dict(apply_overrides({}, **overrides))
    return load_config(args.config, **overrides)


def _write_outputs(cfg: ScenarioConfig, tag: str, records, summary: SimulationSummary) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_records_csv(cfg.out_dir / f"records_{tag}.csv", records, cfg.include_timing)
    write_summary_json(cfg.out_dir / f"summary_{tag}.json", summary, cfg.include_timing)


def comparison_table(rows: list[SimulationSummary]) -> str:
    """Two-column table: energy (kWh) and settlement mileage cost ($) per strategy."""
    lines = [f"{'strategy':<22}{'energy (kWh)':>16}{'mileage cost ($)':>20}"]
    for s in rows:
        name = "MPPT" if s.mode == "mppt" else f"proposed (alpha={s.alpha:g})"
        lines.append(f"{name:<22}{s.energy_kwh:>16.4g}{s.mileage_settlement:>20.4g}")
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = _load(args, args.alpha)
    prep = prepare(cfg)
    rec_p, sum_p = run_scenario(cfg, prep)
    rec_b, sum_b = run_mppt_baseline(cfg, prep)
    _write_outputs(cfg, "proposed", rec_p, sum_p)
    _write_outputs(cfg, "mppt", rec_b, sum_b)
    print(json.dumps({"proposed": sum_p.to_dict(cfg.include_timing),
                      "mppt": sum_b.to_dict(cfg.include_timing)}, indent=2))
    print(comparison_table([sum_b, sum_p]))
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _load(args)
    records, summary = run_mppt_baseline(cfg)
    _write_outputs(cfg, "mppt", records, summary)
    print(json.dumps(summary.to_dict(cfg.include_timing), indent=2))
    return EXIT_OK


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def cmd_pareto(args) -> int:
    alphas = sorted(set(args.alphas))
    configs = [_load(args, a) for a in alphas]
    prep = prepare(configs[0])
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda c: run_scenario(c, prep), configs))
    out = configs[0].out_dir
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for cfg, (_, summary) in zip(configs, results):
        write_summary_json(out / f"summary_alpha_{cfg.alpha:g}.json", summary, cfg.include_timing)
        summaries.append(summary)
    with open(out / "pareto_front.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRONT_COLUMNS)
        for s in summaries:
            w.writerow([repr(float(getattr(s, k))) if isinstance(getattr(s, k), float) else getattr(s, k)
                        for k in FRONT_COLUMNS])
    print(json.dumps([s.to_dict() for s in summaries], indent=2))
    return EXIT_OK


def cmd_fit_cp(args) -> int:
    grid = CpGrid()
    if args.config is not None:
        doc = json.loads(args.config.read_text(encoding="utf-8"))
        try:
            grid = CpGrid(**doc.get("cp_grid", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{args.config}: bad cp_grid: {exc}") from None
    text = json.dumps(fit_cp(grid).to_dict(), indent=2)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "cp_fit.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_records

    records = read_records_csv(args.records)
    baseline = read_records_csv(args.baseline) if args.baseline else None
    out = args.out or args.records.parent
    out.mkdir(parents=True, exist_ok=True)
    path = out / (args.records.stem + ".svg")
    try:
        plot_records(records, path, baseline)
    except KeyError as exc:
        raise TraceParseError(f"{args.records}: {exc.args[0]}") from None
    print(path)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "baseline": cmd_baseline, "pareto": cmd_pareto,
            "fit-cp": cmd_fit_cp, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CpFitError, SolverConfigError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"error: {exc.strerror or exc}{': ' + str(name) if name else ''}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
