"""Command-line entry point: ``alarmtaxis <subcommand> [options]``.

Exit codes: 0 success, 1 domain failure (a check failed, the solver or a
time step failed), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import kernels
from .diagnostics import (
    DiagnosticsError,
    definiteness_threshold,
    fit_decay,
    is_positive_definite,
    matrix_A,
    matrix_B,
    record,
)
from .experiment import (
    TIMESERIES,
    ConfigError,
    ExperimentConfig,
    config_to_text,
    emit_plot_script,
    initial_state,
    load_config,
    parse_params,
    read_timeseries,
    snapshot_name,
    write_snapshot,
    write_timeseries,
)
from .integrate import StepError, run
from .params import (
    SteadyStateError,
    bracket_root,
    reduced_equation,
    solve_steady_state,
    steady_state_residual,
    validate_hypothesis,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("alarmtaxis")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _clean(x):
    """JSON-safe copy: NaN and infinities become null."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _record_dict(rec) -> dict:
    return dict(zip(rec.field_names(), rec.as_tuple()))


def simulate(cfg: ExperimentConfig, out_dir) -> dict:
    """Run one experiment into ``out_dir`` and return the summary.

    On a step failure the diagnostics recorded so far are still written and
    the summary carries ``status = "failed"`` plus the last valid time.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_to_text(cfg))
    p, grid = cfg.params, cfg.grid

    steady = None
    steady_note = None
    try:
        steady = solve_steady_state(p)
    except SteadyStateError as exc:
        steady_note = str(exc)
    if cfg.initial.kind == "steady_perturbed" and steady is None:
        raise SteadyStateError(f"steady_perturbed initial data unavailable: {steady_note}")

    state0 = initial_state(cfg, steady)
    records = []
    pending = sorted(cfg.snapshot_times)
    written = []

    def observe(state):
        records.append(record(state, steady, p, grid))
        while pending and abs(state.t - pending[0]) <= 1e-12 * max(1.0, pending[0]):
            path = out / snapshot_name(pending.pop(0))
            write_snapshot(state, grid, path)
            written.append(path.name)
        while pending and pending[0] < state.t:
            pending.pop(0)

    summary = {
        "backend": kernels.BACKEND,
        "params": {k: getattr(p, k) for k in p.__dataclass_fields__},
        "grid": {"n": list(grid.n), "length": list(grid.length)},
        "hypothesis": validate_hypothesis(p).as_dict(),
        "steady_state": list(steady.as_tuple()) if steady else None,
        "steady_state_note": steady_note,
        "k1": max(1.0, float(state0.u.max())),
    }
    try:
        run(state0, p, grid, cfg.step, observer=observe, stop_times=cfg.snapshot_times)
        summary["status"] = "ok"
    except StepError as exc:
        summary["status"] = "failed"
        summary["error"] = str(exc)
        summary["last_valid_time"] = exc.t

    write_timeseries(records, out / TIMESERIES)
    summary["snapshots"] = written
    summary["initial"] = _record_dict(records[0])
    summary["final"] = _record_dict(records[-1])
    names = ("linf_u", "linf_v", "linf_w", "grad_linf_u", "grad_linf_v")
    summary["max_norms"] = {k: max(getattr(r, k) for r in records) for k in names}
    summary["comparison_bound_holds"] = summary["max_norms"]["linf_u"] <= summary["k1"] + 1e-6

    fit = None
    if steady is not None:
        try:
            fit = fit_decay(records)
            summary["decay_fit"] = {"c1": fit.c1, "c2": fit.c2, "r_squared": fit.r_squared,
                                    "window": list(fit.window), "samples": fit.samples}
        except DiagnosticsError as exc:
            summary["decay_fit"] = {"error": str(exc)}
        umax, vmax = summary["max_norms"]["linf_u"], summary["max_norms"]["linf_v"]
        summary["A_positive_definite"] = is_positive_definite(matrix_A(p))
        summary["B_positive_definite_at_maxima"] = is_positive_definite(matrix_B(p, umax, vmax, steady))
        # empirical analogue of the unquantified taxis thresholds
        summary["empirical_thresholds"] = {
            "xi": definiteness_threshold(p, steady, umax, vmax, "xi"),
            "chi": definiteness_threshold(p, steady, umax, vmax, "chi"),
            "evaluated_at": {"u": umax, "v": vmax},
        }
    emit_plot_script(out, fit=fit, k1=summary["k1"])
    (out / "summary.json").write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
    return summary


def _sweep_point(args):
    index, cfg, out_dir = args
    try:
        summary = simulate(cfg, out_dir)
        return index, summary, None
    except (SteadyStateError, ConfigError, ValueError) as exc:
        return index, None, str(exc)


def sweep_points(cfg: ExperimentConfig) -> list:
    """Cartesian product of the ``[sweep]`` lists; one point when there are none."""
    if not cfg.sweep:
        return [cfg]
    names = [name for name, _ in cfg.sweep]
    return [cfg.with_params(**dict(zip(names, combo))) for combo in itertools.product(*(v for _, v in cfg.sweep))]


def run_sweep(cfg: ExperimentConfig, out_dir, workers: Optional[int] = None) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = sweep_points(cfg)
    names = [name for name, _ in cfg.sweep]
    jobs = [(i, pt, out / f"point_{i:04d}") for i, pt in enumerate(points)]
    workers = workers or cfg.workers or len(os.sched_getaffinity(0))
    if workers == 1 or len(jobs) == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_sweep_point, jobs))

    header = ["point", "dir"] + names + ["h_b1", "h_b3", "h_sum", "stability", "status", "c2", "r_squared",
                                         "linf_dist_u", "linf_dist_v", "linf_dist_w", "error"]
    rows = []
    for (i, pt, d), (_, summary, err) in zip(jobs, results):
        rep = validate_hypothesis(pt.params)
        row = [i, d.name] + [getattr(pt.params, n) for n in names] + [rep.h_b1, rep.h_b3, rep.h_sum, rep.stability]
        if summary is None:
            row += ["error", "", "", "", "", "", err]
        else:
            fit = summary.get("decay_fit") or {}
            fin = summary["final"]
            row += [summary["status"], fit.get("c2", ""), fit.get("r_squared", ""),
                    fin["linf_dist_u"], fin["linf_dist_v"], fin["linf_dist_w"], summary.get("error", fit.get("error", ""))]
        rows.append(row)
    with open(out / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return rows


# subcommands ----------------------------------------------------------------


def _read_text(path) -> str:
    if path is None:
        return ""
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def cmd_check_params(args) -> int:
    params = parse_params(_read_text(args.config), args.set)
    report = validate_hypothesis(params)
    _say(args, "\n".join(report.lines()))
    return EXIT_OK if report.all_pass else EXIT_FAIL


def cmd_steady_state(args) -> int:
    params = parse_params(_read_text(args.config), args.set)
    lo, hi = bracket_root(params)
    _say(args, f"bracket [{lo:.17g}, {hi:.17g}]: J({lo:g}) = {reduced_equation(params, lo):.17g}, "
               f"J({hi:g}) = {reduced_equation(params, hi):.17g}")
    try:
        ss = solve_steady_state(params)
    except SteadyStateError as exc:
        print(f"steady-state: {exc}", file=sys.stderr)
        return EXIT_FAIL
    res = steady_state_residual(params, ss.as_tuple())
    _say(args, f"u* = {ss.u_star:.17g}\nv* = {ss.v_star:.17g}\nw* = {ss.w_star:.17g}")
    _say(args, "residuals = " + ", ".join(f"{r:.3e}" for r in res))
    if not ss.verified:
        _say(args, "warning: hypothesis (H) fails; result unverified")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.set)
    out = args.out or cfg.output_dir
    try:
        summary = simulate(cfg, out)
    except SteadyStateError as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if summary["status"] != "ok":
        print(f"simulate: {summary['error']} (last valid time {summary['last_valid_time']:.6g})", file=sys.stderr)
        return EXIT_FAIL
    fin = summary["final"]
    dist = fin["linf_dist_u"] + fin["linf_dist_v"] + fin["linf_dist_w"]
    lines = [f"wrote {out}", f"t = {fin['t']:.6g}, max-norm distance to steady state = {dist:.6g}"]
    fit = summary.get("decay_fit") or {}
    if "c2" in fit:
        lines.append(f"decay rate C2 = {fit['c2']:.6g} (r^2 = {fit['r_squared']:.6f})")
    if "B_positive_definite_at_maxima" in summary:
        lines.append(f"B positive definite at run maxima: {summary['B_positive_definite_at_maxima']}")
    _say(args, "\n".join(lines))
    return EXIT_OK


def cmd_fit_decay(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        path = path / TIMESERIES
    try:
        records = read_timeseries(path)
    except (OSError, ValueError) as exc:
        print(f"fit-decay: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        fit = fit_decay(records, tuple(args.window) if args.window else None)
    except DiagnosticsError as exc:
        print(f"fit-decay: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _say(args, f"window [{fit.window[0]:g}, {fit.window[1]:g}], {fit.samples} samples\n"
               f"C1 = {fit.c1:.6g}\nC2 = {fit.c2:.6g}\nr^2 = {fit.r_squared:.6f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.set)
    out = args.out or cfg.output_dir
    rows = run_sweep(cfg, out, args.workers)
    bad = sum(1 for r in rows if r[-7] != "ok")
    _say(args, f"wrote {len(rows)} point(s) and index.csv to {out}" + (f"; {bad} failed" if bad else ""))
    return EXIT_FAIL if bad else EXIT_OK


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        help="override a config value (section.key=value), repeatable")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")

    parser = _Parser(prog="alarmtaxis", description="Alarm-taxis predator-prey simulator and analysis tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("check-params", parents=[common], help="check the parameter hypotheses").set_defaults(func=cmd_check_params)
    sub.add_parser("steady-state", parents=[common], help="solve for the coexistence state").set_defaults(func=cmd_steady_state)
    p = sub.add_parser("simulate", parents=[common], help="run one simulation")
    p.set_defaults(func=cmd_simulate, needs_config=True)
    p = sub.add_parser("fit-decay", parents=[common], help="fit exponential decay to a timeseries")
    p.add_argument("path", help="timeseries.csv or a run directory")
    p.add_argument("--window", nargs=2, type=float, metavar=("T0", "T1"))
    p.set_defaults(func=cmd_fit_decay)
    p = sub.add_parser("sweep", parents=[common], help="run a parameter sweep")
    p.add_argument("--workers", type=int, default=None, help="parallel runs (default: all cores)")
    p.set_defaults(func=cmd_sweep, needs_config=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    if getattr(args, "needs_config", False) and not args.config:
        parser.error(f"{args.command} requires --config")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
