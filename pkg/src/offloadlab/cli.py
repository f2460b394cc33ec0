"""Command-line surface: analyze, validate, sweep, optimize, estimate.

Every command is deterministic given its inputs and seed; CSV output uses
fixed decimal formatting and fixed column order so reruns are byte-stable.

Exit codes: 0 success, 2 input/usage error, 3 validation-threshold breach.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from typing import Any, Optional

from . import __version__
from .analytics import CASE_LABELS, AnalyticReport, analyze, case_probabilities, theta_and_lambda
from .errors import OffloadLabError
from .optimize import find_optimal
from .report import ResultTable, format_float, json_document
from .scenario import Scenario, load_scenario, scenario_fragment
from .simulate import backend_name, run_monte_carlo
from .trace import estimate_trace_file

__all__ = ["main", "build_parser"]

VALIDATION_ERROR_PCT = 1.0

SWEEP_AXES = ("femto_mean", "femto_variance", "session_mean", "threshold_mean")
_AXIS_COLUMNS = {
    "femto_mean": "femto_mean_seconds",
    "femto_variance": "femto_variance_seconds2",
    "session_mean": "session_mean_seconds",
    "threshold_mean": "threshold_mean_seconds",
}


def _write_output(args, text: str) -> None:
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _scenario_echo(sc: Scenario) -> dict[str, Any]:
    def dist(d):
        return {"family": d.family, "mean_seconds": d.mean, "variance_seconds2": d.variance}

    return {
        "session_mean_seconds": sc.session_mean,
        "macro": dist(sc.macro),
        "femto": dist(sc.femto),
        "threshold_mean_seconds": sc.threshold_mean,
    }


# --- analyze ---------------------------------------------------------------

_REPORT_FIELDS: tuple[tuple[str, str, int], ...] = (
    # (attribute, unit, decimal places for the pretty printer)
    ("alpha", "probability", 7),
    ("beta", "probability", 7),
    ("tau", "seconds", 5),
    ("sigma", "seconds", 5),
    ("xi", "seconds", 5),
    ("phi", "seconds", 5),
    ("rho", "seconds", 5),
    ("x1", "dimensionless", 7),
    ("x2", "dimensionless", 7),
    ("x3", "dimensionless", 7),
    ("y1", "seconds", 5),
    ("y2", "seconds", 5),
    ("e_nb", "handovers/session", 5),
    ("e_nt", "handovers/session", 5),
    ("e_tb", "seconds", 5),
    ("e_tt", "seconds", 5),
    ("theta", "ratio", 7),
    ("lambda_", "ratio", 7),
    ("theta_closed_form", "ratio", 7),
    ("lambda_closed_form", "ratio", 7),
)


def _report_name(attr: str) -> str:
    return "lambda" if attr == "lambda_" else attr


def _analyze_text(sc: Scenario, rep: AnalyticReport) -> str:
    pr1, pr2 = case_probabilities(sc.params())
    lines = ["analytic report"]
    lines.append(f"  {'case_prob_start_macro':28s} {pr1:.7f}  probability")
    lines.append(f"  {'case_prob_start_femto':28s} {pr2:.7f}  probability")
    for attr, unit, places in _REPORT_FIELDS:
        v = getattr(rep, attr)
        lines.append(f"  {_report_name(attr):28s} {v:.{places}f}  {unit}")
    lines.append("per-case expectations (conditional on start cell)")
    for label in CASE_LABELS:
        cv = rep.per_case[label]
        lines.append(
            f"  case {label}: n_t = {cv.n_t:.5f} handovers, "
            f"t_b = {cv.t_b:.5f} s, t_t = {cv.t_t:.5f} s"
        )
    return "\n".join(lines) + "\n"


def _analyze_table(rep: AnalyticReport, sc: Scenario) -> ResultTable:
    t = ResultTable(kind="analyze", columns=["quantity", "value", "unit"],
                    meta=_scenario_echo(sc))
    pr1, pr2 = case_probabilities(sc.params())
    t.add_row("case_prob_start_macro", pr1, "probability")
    t.add_row("case_prob_start_femto", pr2, "probability")
    for attr, unit, _ in _REPORT_FIELDS:
        t.add_row(_report_name(attr), getattr(rep, attr), unit)
    for label in CASE_LABELS:
        cv = rep.per_case[label]
        t.add_row(f"case_{label}_n_t", cv.n_t, "handovers/session")
        t.add_row(f"case_{label}_t_b", cv.t_b, "seconds")
        t.add_row(f"case_{label}_t_t", cv.t_t, "seconds")
    return t


def cmd_analyze(args) -> int:
    sc = load_scenario(args.scenario)
    rep = analyze(sc.params())
    if args.format == "structured":
        pr1, pr2 = case_probabilities(sc.params())
        payload = {
            "scenario": _scenario_echo(sc),
            "case_probabilities": {"start_macro": pr1, "start_femto": pr2},
            "report": {
                _report_name(attr): getattr(rep, attr) for attr, _, _ in _REPORT_FIELDS
            },
            "per_case": {
                label: {
                    "n_t": rep.per_case[label].n_t,
                    "t_b": rep.per_case[label].t_b,
                    "t_t": rep.per_case[label].t_t,
                }
                for label in CASE_LABELS
            },
        }
        _write_output(args, json_document("analyze", payload))
    elif args.format == "csv":
        _write_output(args, _analyze_table(rep, sc).to_csv())
    else:
        _write_output(args, _analyze_text(sc, rep))
    return 0


# --- validate --------------------------------------------------------------

def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    params = sc.params()
    rep = analyze(params)
    cfg = sc.sim_config(replications=args.replications, seed=args.seed,
                        mode=args.mode, workers=args.workers)
    sim = run_monte_carlo(params, cfg)

    rows = [
        ("n_t", rep.e_nt, sim.estimates["n_t"]),
        ("t_t_seconds", rep.e_tt, sim.estimates["t_t"]),
        ("theta_pct", rep.theta * 100.0, sim.estimates["theta"], 100.0),
        ("lambda_pct", rep.lambda_ * 100.0, sim.estimates["lambda"], 100.0),
    ]
    table = ResultTable(
        kind="validate",
        columns=["quantity", "analytic", "simulated", "error_pct", "ci_halfwidth"],
        meta={
            "scenario": _scenario_echo(sc),
            "replications": cfg.replications,
            "seed": cfg.seed,
            "counting_mode": cfg.counting_mode,
            "backend": backend_name(),
            "threshold_error_pct": VALIDATION_ERROR_PCT,
        },
    )
    worst = 0.0
    for row in rows:
        name, ana, est = row[0], row[1], row[2]
        scale = row[3] if len(row) > 3 else 1.0
        simulated = est.mean * scale
        err_pct = abs(ana - simulated) / abs(ana) * 100.0
        worst = max(worst, err_pct) if math.isfinite(err_pct) else math.inf
        table.add_row(name, ana, simulated, err_pct, est.ci_halfwidth * scale)
    text = table.to_json() if args.format == "structured" else table.to_csv()
    _write_output(args, text)
    return 0 if worst < VALIDATION_ERROR_PCT else 3


# --- sweep -----------------------------------------------------------------

def _sweep_grid(args) -> list[float]:
    lo, hi, n = args.from_, args.to, args.points
    if not (lo > 0.0 and hi > 0.0 and hi >= lo):
        raise OffloadLabError(
            f"invalid sweep range [{lo}, {hi}]: bounds must be positive with to >= from"
        )
    if n == 1:
        return [lo]
    if args.log:
        import numpy as np

        g = np.geomspace(lo, hi, n)
        g[0], g[-1] = lo, hi
        return [float(x) for x in g]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _params_for_axis(sc: Scenario, axis: str, value: float):
    from .residence import make_from_moments

    if axis == "threshold_mean":
        return sc.params_at(1.0 / value)
    base = sc.params()
    if axis == "session_mean":
        return replace(base, eta_s=1.0 / value)
    if axis == "femto_mean":
        fam = sc.femto.family
        var = None if fam == "exponential" else sc.femto.variance
        return replace(base, femto=make_from_moments(fam, value, var))
    if axis == "femto_variance":
        if sc.femto.family == "exponential":
            raise OffloadLabError(
                "femto.family must be gamma to sweep femto_variance "
                "(an exponential law fixes variance = mean^2)"
            )
        return replace(base, femto=make_from_moments("gamma", sc.femto.mean, value))
    raise OffloadLabError(f"unknown sweep axis {axis!r}")


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    grid = _sweep_grid(args)
    columns = [_AXIS_COLUMNS[args.axis], "theta", "lambda"]
    if args.simulate:
        columns += ["theta_sim", "lambda_sim", "theta_sim_ci", "lambda_sim_ci"]
    table = ResultTable(
        kind="sweep",
        columns=columns,
        meta={
            "scenario": _scenario_echo(sc),
            "axis": args.axis,
            "points": args.points,
            "log_spaced": bool(args.log),
            "simulated": bool(args.simulate),
        },
    )
    for value in grid:
        params = _params_for_axis(sc, args.axis, value)
        th, lam = theta_and_lambda(params)
        if args.simulate:
            cfg = sc.sim_config(replications=args.replications, seed=args.seed,
                                mode=args.mode, workers=args.workers)
            sim = run_monte_carlo(params, cfg)
            table.add_row(
                value, th, lam,
                sim.estimates["theta"].mean, sim.estimates["lambda"].mean,
                sim.estimates["theta"].ci_halfwidth, sim.estimates["lambda"].ci_halfwidth,
            )
        else:
            table.add_row(value, th, lam)
    text = table.to_json() if args.format == "structured" else table.to_csv()
    _write_output(args, text)
    return 0


# --- optimize ---------------------------------------------------------------

def cmd_optimize(args) -> int:
    sc = load_scenario(args.scenario)
    base = sc.params_at(1.0)  # eta_o is the decision variable
    opt = find_optimal(base, sc.optimizer_config())
    fields = [
        ("eta_o_star", opt.eta_o_star, "1/seconds", 7),
        ("expected_threshold_star", opt.expected_threshold_star, "seconds", 5),
        ("theta_at", opt.theta_at, "ratio", 7),
        ("lambda_at", opt.lambda_at, "ratio", 7),
        ("objective_value", opt.objective_value, "dimensionless", 7),
    ]
    if args.format == "structured":
        payload = {
            "scenario": _scenario_echo(sc),
            "optimum": {name: v for name, v, _, _ in fields},
        }
        payload["optimum"]["boundary_hit"] = opt.boundary_hit
        _write_output(args, json_document("optimize", payload))
    elif args.format == "csv":
        table = ResultTable(kind="optimize", columns=["quantity", "value", "unit"],
                            meta=_scenario_echo(sc))
        for name, v, unit, _ in fields:
            table.add_row(name, v, unit)
        table.add_row("boundary_hit", opt.boundary_hit, "flag")
        _write_output(args, table.to_csv())
    else:
        lines = ["optimal threshold selection"]
        for name, v, unit, places in fields:
            lines.append(f"  {name:28s} {v:.{places}f}  {unit}")
        lines.append(f"  {'boundary_hit':28s} {opt.boundary_hit}")
        _write_output(args, "\n".join(lines) + "\n")
    return 0


# --- estimate ---------------------------------------------------------------

def cmd_estimate(args) -> int:
    est = estimate_trace_file(args.trace)
    moments = [("femto", est.femto), ("macro", est.macro), ("session", est.session)]
    have_variances = all(m.count >= 2 for _, m in moments)
    fragment = None
    if have_variances:
        fragment = scenario_fragment(
            session_mean=est.session.mean,
            macro_mean=est.macro.mean, macro_var=est.macro.variance,
            femto_mean=est.femto.mean, femto_var=est.femto.variance,
        )
    if args.format == "structured":
        payload = {
            "estimates": {
                name: {
                    "mean_seconds": m.mean,
                    "variance_seconds2": m.variance,
                    "count": m.count,
                    "stderr_seconds": m.stderr,
                }
                for name, m in moments
            },
            "suggested_scenario": fragment,
        }
        _write_output(args, json_document("estimate", payload))
    elif args.format == "csv":
        table = ResultTable(
            kind="estimate",
            columns=["quantity", "mean_seconds", "variance_seconds2", "count", "stderr"],
        )
        for name, m in moments:
            table.add_row(name, m.mean, m.variance, m.count, m.stderr)
        _write_output(args, table.to_csv())
    else:
        lines = ["trace estimates"]
        for name, m in moments:
            lines.append(
                f"  {name:8s} mean = {format_float(m.mean)} s, "
                f"variance = {format_float(m.variance)} s^2, "
                f"count = {m.count}, stderr = {format_float(m.stderr)} s"
            )
        if fragment is not None:
            lines.append("")
            lines.append("suggested scenario fragment:")
            lines.append(fragment.rstrip("\n"))
        else:
            lines.append("")
            lines.append("too few complete intervals to suggest a scenario fragment")
        _write_output(args, "\n".join(lines) + "\n")
    return 0


# --- parser -----------------------------------------------------------------

def _add_common(sub, scenario_required: bool = True):
    if scenario_required:
        sub.add_argument("--scenario", required=True, help="scenario file path")
    sub.add_argument("--output", help="write output to this path instead of stdout")
    sub.add_argument("--format", choices=("csv", "structured"), default=None,
                     help="output format (default: human-readable or csv)")


def _add_sim_flags(sub):
    sub.add_argument("--seed", type=int, default=None, help="override simulation seed")
    sub.add_argument("--replications", type=int, default=None,
                     help="override session count")
    sub.add_argument("--mode", choices=("paper", "flowchart"), default=None,
                     help="handover counting mode")
    sub.add_argument("--workers", type=int, default=None,
                     help="parallel batch workers (deterministic regardless)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="offloadlab",
        description="Handover-suppression analytics, simulation, and threshold optimization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("analyze", help="evaluate the closed-form analytics")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = subs.add_parser("validate", help="compare analytics against a Monte Carlo run")
    _add_common(p)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_validate)

    p = subs.add_parser("sweep", help="tabulate theta/lambda along one parameter axis")
    _add_common(p)
    _add_sim_flags(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--from", dest="from_", type=float, required=True,
                   help="first grid value (seconds or seconds^2)")
    p.add_argument("--to", type=float, required=True, help="last grid value")
    p.add_argument("--points", type=int, required=True, help="grid size (>= 1)")
    p.add_argument("--log", action="store_true", help="log-spaced grid")
    p.add_argument("--simulate", action="store_true",
                   help="add Monte Carlo columns at each grid point")
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("optimize", help="find the threshold rate maximizing theta+lambda")
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = subs.add_parser("estimate", help="estimate model inputs from a handover trace")
    p.add_argument("trace", help="trace CSV path")
    _add_common(p, scenario_required=False)
    p.set_defaults(func=cmd_estimate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "points", None) is not None and args.points < 1:
        parser.error("--points must be >= 1")
    try:
        return args.func(args)
    except OffloadLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
