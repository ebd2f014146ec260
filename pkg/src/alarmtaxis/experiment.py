"""Experiment configuration, CSV persistence and gnuplot script emission.

Config files are INI-style: ``[section]`` headers, ``key = value`` lines and
``#`` comments. Sections and keys (defaults in parentheses)::

    [params]   d1 d2 xi chi r1 r2 r3 b1 b2 b3 sigma   (ModelParams defaults)
               allow_unverified                         (false)
    [grid]     n        cells per axis, "128" or "64, 64"   (required)
               length   extent per axis                    (1.0)
    [initial]  kind     constant | steady_perturbed | gaussian | random_smooth
                                                        (steady_perturbed)
               amplitude  relative size of the perturbation  (0.1)
               modes      cosine mode per species            (1, 2, 1)
               values     u, v, w for constant, background for gaussian
                                                        (1, 1, 1)
               center, width   gaussian bump location and width  (mid, 0.1)
               seed     random_smooth seed                   (0)
    [time]     t_end (required) cfl_safety dt_max method cadence
               record_interval max_steps                 (StepConfig defaults)
    [output]   dir               run directory           (runs/default)
               snapshot_times    comma list within [0, t_end]   (t_end)
    [sweep]    any [params] key with a comma list of values; workers (0 = all cores)
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import io
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .diagnostics import DecayFit, DiagnosticsRecord
from .grid import Grid
from .integrate import Method, StepConfig
from .params import PARAM_NAMES, TAXIS_NAMES, ModelParams, SteadyState
from .state import StateField

IC_KINDS = ("constant", "steady_perturbed", "gaussian", "random_smooth")
TIMESERIES = "timeseries.csv"
PLOT_SCRIPT = "plot.gp"


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based source line when known."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.line = line
        self.key = key
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "steady_perturbed"
    amplitude: float = 0.1
    modes: tuple = (1, 2, 1)
    values: tuple = (1.0, 1.0, 1.0)
    center: Optional[tuple] = None
    width: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    grid: Grid
    step: StepConfig
    initial: InitialSpec = InitialSpec()
    output_dir: str = "runs/default"
    snapshot_times: tuple = ()
    allow_unverified: bool = False
    sweep: tuple = ()  # ((name, (values...)), ...)
    workers: int = 0

    def with_params(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, params=self.params.replace(**changes), sweep=())


_SCHEMA = {
    "params": set(PARAM_NAMES) | {"allow_unverified"},
    "grid": {"n", "length"},
    "initial": {"kind", "amplitude", "modes", "values", "center", "width", "seed"},
    "time": {"t_end", "cfl_safety", "dt_max", "method", "cadence", "record_interval", "max_steps"},
    "output": {"dir", "snapshot_times"},
    "sweep": set(PARAM_NAMES) | {"workers"},
}
_REQUIRED = {("grid", "n"), ("time", "t_end")}


def _line_index(text: str) -> dict:
    """(section, key) -> first line number, for error messages."""
    where = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            where.setdefault((section, None), lineno)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), lineno)
    return where


def read_parser(text: str) -> tuple:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header before the first key", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse {exc.errors[0][1].strip() if exc.errors else 'input'}; expected 'key = value'", lineno) from None
    return cp, _line_index(text)


def apply_overrides(cp: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    """Apply ``section.key=value`` (or ``key=value`` when the key is unambiguous)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if "." in key:
            section, key = key.split(".", 1)
        else:
            owners = [s for s in ("params", "grid", "initial", "time", "output") if key in _SCHEMA[s]]
            if len(owners) != 1:
                raise ConfigError(f"override key {key!r} is unknown or ambiguous; use section.key", key=key)
            section = owners[0]
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override key {section}.{key}", key=key)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)


def _floats(text: str) -> tuple:
    return tuple(float(s) for s in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _check_schema(cp: configparser.ConfigParser, where: dict) -> None:
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", where.get((section, None)), key=section)
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", where.get((section, key)), key=key)


class _Reader:
    def __init__(self, cp, where):
        self.cp = cp
        self.where = where

    def get(self, section, key, conv, default=None):
        if not self.cp.has_option(section, key):
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}.{key}: {exc}", self.where.get((section, key)), key=key) from None

    def error(self, section, key, message):
        return ConfigError(f"{key}: {message}", self.where.get((section, key)), key=key)


def _build_params(r: _Reader) -> tuple:
    pvals = {name: r.get("params", name, float) for name in PARAM_NAMES}
    for name, val in pvals.items():
        if val is not None and not (math.isfinite(val) and (val > 0 or (val == 0 and name in TAXIS_NAMES))):
            raise r.error("params", name, f"must be a positive number, got {val}")
    allow = r.get("params", "allow_unverified", _bool, False)
    params = ModelParams(**{k: v for k, v in pvals.items() if v is not None})
    if params.sigma <= 1 and not allow:
        raise r.error("params", "sigma", "sigma must exceed 1 for verified runs (set allow_unverified = true to explore)")
    return params, allow


def parse_params(text: str, overrides: Sequence[str] = ()) -> ModelParams:
    """Only the ``[params]`` section; other sections are schema-checked but not required."""
    cp, where = read_parser(text)
    apply_overrides(cp, overrides)
    _check_schema(cp, where)
    return _build_params(_Reader(cp, where))[0]


def build_config(cp: configparser.ConfigParser, where: Optional[dict] = None) -> ExperimentConfig:
    where = where or {}
    _check_schema(cp, where)
    r = _Reader(cp, where)
    get, field_error = r.get, r.error
    for section, key in sorted(_REQUIRED):
        if not cp.has_option(section, key):
            raise ConfigError(f"missing required key {key!r} in [{section}]", key=key)

    params, allow = _build_params(r)

    n = get("grid", "n", lambda s: tuple(int(x) for x in s.replace(",", " ").split()))
    length = get("grid", "length", _floats, (1.0,))
    try:
        grid = Grid(n if len(n) > 1 else n[0], length if len(length) > 1 else length[0])
    except ValueError as exc:
        raise field_error("grid", "n", str(exc)) from None

    kind = get("initial", "kind", str.strip, "steady_perturbed")
    if kind not in IC_KINDS:
        raise field_error("initial", "kind", f"must be one of {', '.join(IC_KINDS)}")
    modes = get("initial", "modes", lambda s: tuple(int(x) for x in s.replace(",", " ").split()), (1, 2, 1))
    values = get("initial", "values", _floats, (1.0, 1.0, 1.0))
    if len(modes) != 3 or len(values) != 3:
        raise field_error("initial", "modes" if len(modes) != 3 else "values", "needs three entries (u, v, w)")
    if any(x < 0 for x in values):
        raise field_error("initial", "values", "densities must be nonnegative")
    center = get("initial", "center", _floats)
    if center is not None and len(center) != grid.dim:
        raise field_error("initial", "center", f"needs {grid.dim} coordinate(s)")
    initial = InitialSpec(
        kind=kind,
        amplitude=get("initial", "amplitude", float, 0.1),
        modes=modes,
        values=values,
        center=center,
        width=get("initial", "width", float, 0.1),
        seed=get("initial", "seed", int, 0),
    )
    if not initial.width > 0:
        raise field_error("initial", "width", "must be positive")
    if not initial.amplitude >= 0:
        raise field_error("initial", "amplitude", "must be nonnegative")

    t_end = get("time", "t_end", float)
    method = get("time", "method", str.strip, Method.RK2_SSP.value)
    if method not in {m.value for m in Method}:
        raise field_error("time", "method", f"must be one of {', '.join(m.value for m in Method)}")
    step_kw = dict(
        t_end=t_end,
        cfl_safety=get("time", "cfl_safety", float, StepConfig.cfl_safety),
        dt_max=get("time", "dt_max", float, StepConfig.dt_max),
        method=method,
        cadence=get("time", "cadence", int, StepConfig.cadence),
        record_interval=get("time", "record_interval", float, None),
        max_steps=get("time", "max_steps", lambda s: int(float(s)), StepConfig.max_steps),
    )
    try:
        step = StepConfig(**step_kw)
    except ValueError as exc:
        bad = next((k for k in step_kw if k in str(exc)), "t_end")
        raise field_error("time", bad, str(exc)) from None

    snaps = get("output", "snapshot_times", _floats, (t_end,))
    for s in snaps:
        if not 0 <= s <= t_end:
            raise field_error("output", "snapshot_times", f"{s} lies outside [0, t_end]")

    sweep = []
    for name in PARAM_NAMES:
        vals = get("sweep", name, _floats)
        if vals is not None:
            if not vals or any(not (math.isfinite(x) and (x > 0 or (x == 0 and name in TAXIS_NAMES))) for x in vals):
                raise field_error("sweep", name, "needs one or more positive values")
            sweep.append((name, vals))
    workers = get("sweep", "workers", int, 0)
    if workers < 0:
        raise field_error("sweep", "workers", "must be >= 0")

    return ExperimentConfig(
        params=params,
        grid=grid,
        step=step,
        initial=initial,
        output_dir=get("output", "dir", str.strip, "runs/default"),
        snapshot_times=tuple(sorted(set(snaps))),
        allow_unverified=allow,
        sweep=tuple(sweep),
        workers=workers,
    )


def parse_config(text: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    cp, where = read_parser(text)
    apply_overrides(cp, overrides)
    return build_config(cp, where)


def load_config(path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def _fmt(x) -> str:
    return format(x, ".17g") if isinstance(x, float) else str(x)


def _join(xs) -> str:
    return ", ".join(_fmt(float(x)) if not isinstance(x, int) else str(x) for x in xs)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialize so that ``parse_config(config_to_text(c)) == c``."""
    out = ["[params]"]
    out += [f"{name} = {_fmt(getattr(cfg.params, name))}" for name in PARAM_NAMES]
    out.append(f"allow_unverified = {str(cfg.allow_unverified).lower()}")
    out += ["", "[grid]", f"n = {', '.join(str(n) for n in cfg.grid.n)}", f"length = {_join(cfg.grid.length)}"]
    ic = cfg.initial
    out += ["", "[initial]", f"kind = {ic.kind}", f"amplitude = {_fmt(ic.amplitude)}",
            f"modes = {', '.join(str(m) for m in ic.modes)}", f"values = {_join(ic.values)}"]
    if ic.center is not None:
        out.append(f"center = {_join(ic.center)}")
    out += [f"width = {_fmt(ic.width)}", f"seed = {ic.seed}"]
    s = cfg.step
    out += ["", "[time]", f"t_end = {_fmt(s.t_end)}", f"cfl_safety = {_fmt(s.cfl_safety)}", f"dt_max = {_fmt(s.dt_max)}",
            f"method = {s.method.value}", f"cadence = {s.cadence}"]
    if s.record_interval is not None:
        out.append(f"record_interval = {_fmt(s.record_interval)}")
    out.append(f"max_steps = {s.max_steps}")
    out += ["", "[output]", f"dir = {cfg.output_dir}", f"snapshot_times = {_join(cfg.snapshot_times)}"]
    if cfg.sweep or cfg.workers:
        out += ["", "[sweep]"] + [f"{name} = {_join(vals)}" for name, vals in cfg.sweep]
        out.append(f"workers = {cfg.workers}")
    return "\n".join(out) + "\n"


# initial conditions ---------------------------------------------------------


def _cos_mode(grid: Grid, mode: int) -> np.ndarray:
    axes = grid.mesh()
    out = np.ones(grid.shape)
    for x, length in zip(axes, grid.length):
        out = out * np.cos(mode * np.pi * x / length)
    return out


def random_smooth_field(grid: Grid, rng: np.random.Generator, max_mode: int = 4) -> np.ndarray:
    """Positive field: a random level plus a few cosine modes whose summed
    amplitude stays below 90% of that level."""
    level = rng.uniform(0.2, 1.5)
    axes = grid.mesh()
    field = np.full(grid.shape, level)
    modes = [k for k in np.ndindex(*(max_mode + 1,) * grid.dim) if any(k)]
    weights = rng.uniform(-1.0, 1.0, len(modes))
    weights *= 0.9 * level / np.abs(weights).sum()
    for k, a in zip(modes, weights):
        term = np.ones(grid.shape)
        for x, length, m in zip(axes, grid.length, k):
            term = term * np.cos(m * np.pi * x / length)
        field = field + a * term
    return field


def initial_state(cfg: ExperimentConfig, steady: Optional[SteadyState] = None) -> StateField:
    grid, ic = cfg.grid, cfg.initial
    if ic.kind == "constant":
        return StateField.constant(grid, *ic.values)
    if ic.kind == "steady_perturbed":
        if steady is None:
            raise ConfigError("steady_perturbed initial data needs a coexistence steady state")
        devs = [ic.amplitude * ref * _cos_mode(grid, m) for ref, m in zip(steady.as_tuple(), ic.modes)]
        return StateField.about(steady, *devs)
    if ic.kind == "gaussian":
        center = ic.center or tuple(l / 2 for l in grid.length)
        r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
        bump = np.exp(-r2 / (2 * ic.width**2))
        return StateField.from_densities(*(val + ic.amplitude * bump for val in ic.values))
    rng = np.random.default_rng(ic.seed)
    return StateField.from_densities(*(random_smooth_field(grid, rng) for _ in range(3)))


# CSV ------------------------------------------------------------------------


def write_timeseries(records: Sequence[DiagnosticsRecord], path) -> None:
    if not records:
        raise ValueError("no diagnostics records to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DiagnosticsRecord.field_names())
    for r in records:
        w.writerow([format(x, ".17g") for x in r.as_tuple()])
    Path(path).write_text(buf.getvalue())


def read_timeseries(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != DiagnosticsRecord.field_names():
        raise ValueError(f"{path}: header does not match the diagnostics schema")
    return [DiagnosticsRecord(*(float(x) for x in row)) for row in rows[1:]]


def snapshot_name(t: float) -> str:
    return f"snapshot_t{t:012.6f}.csv"


def write_snapshot(state: StateField, grid: Grid, path) -> None:
    """One metadata line then one row per cell, row-major (first index slowest).

    Cell densities ``u, v, w`` are always written; states stored about a
    nonzero base also carry the exact deviations ``du, dv, dw``.
    """
    grid.check(state.du, "u")
    has_base = any(state.base)
    idx_cols = ["i"] if grid.dim == 1 else ["i", "j"]
    pos_cols = ["x"] if grid.dim == 1 else ["x", "y"]
    cols = idx_cols + pos_cols + ["u", "v", "w"] + (["du", "dv", "dw"] if has_base else [])
    meta = [
        f"t={state.t:.17g}",
        f"dim={grid.dim}",
        "n=" + "x".join(str(n) for n in grid.n),
        "length=" + "x".join(format(l, ".17g") for l in grid.length),
        "base=" + ",".join(format(b, ".17g") for b in state.base),
        f"equilibrium_base={int(state.at_equilibrium)}",
        "order=row-major",
        "columns=" + ",".join(cols),
    ]
    lines = ["# " + " ".join(meta)]
    centers = grid.centers
    fields = [x.ravel() for x in state.species()]
    devs = [x.ravel() for x in (state.du, state.dv, state.dw)]
    for flat, cell in enumerate(np.ndindex(*grid.shape)):
        row = [str(i) for i in cell] + [format(float(centers[a][i]), ".17g") for a, i in enumerate(cell)]
        row += [format(float(f[flat]), ".17g") for f in fields]
        if has_base:
            row += [format(float(d[flat]), ".17g") for d in devs]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path) -> tuple:
    """Return ``(state, grid)`` reconstructed from :func:`write_snapshot` output."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"{path}: missing metadata line")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split())
    n = tuple(int(x) for x in meta["n"].split("x"))
    length = tuple(float(x) for x in meta["length"].split("x"))
    grid = Grid(n if len(n) > 1 else n[0], length if len(length) > 1 else length[0])
    cols = meta["columns"].split(",")
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    if data.shape[0] != int(np.prod(grid.shape)):
        raise ValueError(f"{path}: expected {np.prod(grid.shape)} cells, found {data.shape[0]}")
    base = tuple(float(x) for x in meta["base"].split(","))
    names = ("du", "dv", "dw") if "du" in cols else ("u", "v", "w")
    arrays = [data[:, cols.index(c)].reshape(grid.shape) for c in names]
    state = StateField(*arrays, t=float(meta["t"]), base=base if "du" in cols else (0.0, 0.0, 0.0),
                       at_equilibrium=bool(int(meta.get("equilibrium_base", "0"))))
    return state, grid


# plotting -------------------------------------------------------------------


def emit_plot_script(run_dir, fit: Optional[DecayFit] = None, k1: Optional[float] = None) -> Path:
    """Write ``plot.gp`` into ``run_dir`` and return its path.

    Produces three PNGs: log distance to the steady state (with the fitted
    line when ``fit`` is given), the energy, and the boundedness norms.
    """
    run_dir = Path(run_dir)
    if not (run_dir / TIMESERIES).is_file():
        raise FileNotFoundError(f"{run_dir / TIMESERIES} not found; run the simulation first")
    dist = '(column("linf_dist_u")+column("linf_dist_v")+column("linf_dist_w"))'
    norm = '(column("linf_u")+column("grad_linf_u")+column("linf_v")+column("grad_linf_v")+column("linf_w"))'
    s = [
        "# gnuplot script; run from this directory: gnuplot plot.gp",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        "set xlabel 't'",
        "",
        "set output 'distance.png'",
        "set logscale y",
        "set ylabel 'sum of max-norm distances to steady state'",
    ]
    if fit is not None:
        s += [
            f"C1 = {fit.c1:.17g}",
            f"C2 = {fit.c2:.17g}",
            f"plot '{TIMESERIES}' using 1:{dist} with lines title 'distance', \\",
            f"     [{fit.window[0]:.17g}:{fit.window[1]:.17g}] C1*exp(-C2*x) with lines dashtype 2 title sprintf('fit, rate %.4g', C2)",
        ]
    else:
        s.append(f"plot '{TIMESERIES}' using 1:{dist} with lines title 'distance'")
    s += [
        "",
        "set output 'energy.png'",
        "set ylabel 'E(t)'",
        f"plot '{TIMESERIES}' using 1:(column(\"energy\")) with lines title 'energy'",
        "",
        "set output 'norms.png'",
        "unset logscale y",
        "set ylabel 'norm'",
        f"plot '{TIMESERIES}' using 1:(column(\"linf_u\")) with lines title 'max u', \\",
        f"     '{TIMESERIES}' using 1:(column(\"linf_v\")) with lines title 'max v', \\",
        f"     '{TIMESERIES}' using 1:(column(\"linf_w\")) with lines title 'max w', \\",
        f"     '{TIMESERIES}' using 1:{norm} with lines title 'W1,inf surrogate'" + (", \\" if k1 is not None else ""),
    ]
    if k1 is not None:
        s.append(f"     {k1:.17g} with lines dashtype 3 title 'K1 = max(1, max u0)'")
    s += ["", "unset output", ""]
    path = run_dir / PLOT_SCRIPT
    path.write_text("\n".join(s))
    return path
