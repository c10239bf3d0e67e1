"""Command-line entry point.

Subcommands: simulate, sweep, compare, fit, agents, drift. Each reads a
config file (see the defaults table in --help), applies key=value
overrides, runs, and writes CSV tables plus a manifest into the output
directory. Plot emission is data-only: dense CSVs, no rendering.

Exit codes: 0 success, 1 usage error, 2 config/validation error,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone

import numpy as np

from cdmsim import agents, analysis, config_io, sde
from cdmsim.dynamics import QUINTIC_GAIN_COEFFS, QUINTIC_STEP_COEFFS, _polyval
from cdmsim.errors import (
    ConfigError, FitError, IntegrationError, ParameterError, SweepTimeoutError)

USAGE_ERROR = 1
CONFIG_ERROR = 2
RUNTIME_ERROR = 3

FIT_EVAL_POINTS = 201
FIT_EVAL_HEADER = "u,refit,step_quintic,gain_quintic"
COMPARE_HEADER = "model," + analysis.SWEEP_HEADER


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cdmsim",
        description="Collective decision-making simulator for two-site nest choice.",
        epilog="config keys and defaults:\n" + config_io.defaults_table(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "simulate": "integrate one trajectory and export it",
        "sweep": "speed-accuracy sweep over the decision-threshold ladder",
        "compare": "paired baseline-vs-modified sweep under common random numbers",
        "fit": "fit the transport step polynomial and tabulate the reference sets",
        "agents": "run one agent-based colony and its decision record",
        "drift": "estimate mean/variance of dx1 on an x1 grid at pinned x2",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(
            name, help=help_text, description=help_text,
            epilog="config keys and defaults:\n" + config_io.defaults_table(),
            formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", help="path to the experiment config file")
        p.add_argument("overrides", nargs="*", metavar="key=value",
                       help="config overrides applied after the file")
        p.add_argument("--out", help="output directory (overrides out.dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides seed)")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for trial batches (default 1)")
    return parser


def _load_config(args) -> config_io.ExperimentConfig:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"out.dir={args.out}")
    return config_io.parse_config_file(args.config, overrides)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit(cfg, tables, started_at):
    manifest = config_io.make_manifest(cfg, tables.keys(), started_at, _now())
    paths = config_io.write_results(manifest, tables, cfg.out_dir)
    for p in paths:
        print(f"wrote {p}")
    return 0


def run_simulate(args) -> int:
    cfg = _load_config(args)
    started = _now()
    if cfg.model == "agents":
        traj = agents.run_colony(cfg.params, cfg.qualities, cfg.integrator)
    else:
        traj = sde.simulate(cfg.params, cfg.model, cfg.gain_model,
                            cfg.integrator, cfg.initial)
    outcome = analysis.detect_decision(
        traj, cfg.decision_theta, cfg.decision_hold,
        analysis.better_site(cfg.params, cfg.model, cfg.qualities))
    print(f"samples={len(traj)} decision={outcome.site} "
          f"timeout={str(outcome.timeout).lower()}")
    return _emit(cfg, {"trajectory.csv": traj.to_csv()}, started)


def run_sweep(args) -> int:
    cfg = _load_config(args)
    started = _now()
    points = analysis.speed_accuracy_sweep(
        cfg.params, cfg.model, cfg.gain_model, cfg.sweep_thetas,
        cfg.sweep_trials, cfg.integrator, cfg.decision_hold,
        qualities=cfg.qualities, jobs=args.jobs)
    return _emit(cfg, {"sweep.csv": analysis.sweep_to_csv(points)}, started)


def run_compare(args) -> int:
    cfg = _load_config(args)
    started = _now()
    lines = [COMPARE_HEADER]
    for model in ("baseline", "modified"):
        points = analysis.speed_accuracy_sweep(
            cfg.params, model, cfg.gain_model, cfg.sweep_thetas,
            cfg.sweep_trials, cfg.integrator, cfg.decision_hold,
            jobs=args.jobs)
        lines.extend(f"{model},{p.csv_row()}" for p in points)
    table = "\n".join(lines) + "\n"
    return _emit(cfg, {"compare.csv": table}, started)


def run_fit(args) -> int:
    cfg = _load_config(args)
    started = _now()
    grid = np.linspace(0.0, 1.0, cfg.fit_grid_points)
    fit = analysis.fit_step_polynomial(
        cfg.fit_target, cfg.fit_degree, grid, cfg.params.quorum_T,
        cfg.params.steepness_k)
    print(f"rmse={fit.rmse:.6g}")
    dense = np.linspace(0.0, 1.0, FIT_EVAL_POINTS)
    lines = [FIT_EVAL_HEADER]
    for u in dense:
        lines.append(f"{u:.12g},{_polyval(fit.coefficients, u):.12g},"
                     f"{_polyval(QUINTIC_STEP_COEFFS, u):.12g},"
                     f"{_polyval(QUINTIC_GAIN_COEFFS, u):.12g}")
    tables = {
        "fit_coefficients.csv": fit.csv_row() + "\n",
        "fit_evaluation.csv": "\n".join(lines) + "\n",
    }
    return _emit(cfg, tables, started)


def run_agents(args) -> int:
    cfg = _load_config(args)
    started = _now()
    traj = agents.run_colony(cfg.params, cfg.qualities, cfg.integrator)
    outcome = analysis.detect_decision(
        traj, cfg.decision_theta, cfg.decision_hold,
        analysis.better_site(cfg.params, "agents", cfg.qualities))
    tables = {
        "trajectory.csv": traj.to_csv(),
        "outcome.jsonl": outcome.to_json() + "\n",
    }
    return _emit(cfg, tables, started)


def run_drift(args) -> int:
    cfg = _load_config(args)
    started = _now()
    if cfg.model == "agents":
        raise ParameterError("drift estimation applies to the mean-field "
                             "models; set model = baseline or modified")
    lo, hi, n_points = cfg.drift_x1
    grid = np.linspace(lo, hi, n_points)
    estimate = analysis.estimate_drift(
        cfg.params, cfg.gain_model, cfg.drift_x2, grid, cfg.drift_replicates,
        model=cfg.model, seed=cfg.seed)
    for p in estimate.infeasible:
        print(f"infeasible grid point x1={p.x1:.6g} (reported as nan)",
              file=sys.stderr)
    print(f"drift_constancy_diagnostic={estimate.diagnostic:.6g}")
    return _emit(cfg, {"drift.csv": estimate.to_csv()}, started)


_COMMANDS = {
    "simulate": run_simulate,
    "sweep": run_sweep,
    "compare": run_compare,
    "fit": run_fit,
    "agents": run_agents,
    "drift": run_drift,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return CONFIG_ERROR
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (IntegrationError, SweepTimeoutError, FitError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
