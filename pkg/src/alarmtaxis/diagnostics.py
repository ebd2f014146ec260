"""Norms, the Lyapunov energy, quadratic-form matrices and decay fits."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Grid, grad_face
from .params import ModelParams, SteadyState
from .state import StateField

SPECIES = ("u", "v", "w")


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    linf_u: float
    linf_v: float
    linf_w: float
    grad_linf_u: float
    grad_linf_v: float
    l1_u: float
    l1_v: float
    l1_w: float
    linf_dist_u: float
    linf_dist_v: float
    linf_dist_w: float
    l2_dist_u: float
    l2_dist_v: float
    l2_dist_w: float
    grad_l2_u: float
    grad_l2_v: float
    energy: float
    mass_y1: float

    @classmethod
    def field_names(cls) -> tuple:
        return tuple(f.name for f in dataclasses.fields(cls))

    @property
    def linf_distance(self) -> float:
        return self.linf_dist_u + self.linf_dist_v + self.linf_dist_w

    def as_tuple(self) -> tuple:
        return dataclasses.astuple(self)


@dataclass(frozen=True)
class DecayFit:
    c1: float
    c2: float
    r_squared: float
    window: tuple
    samples: int


def relative_entropy(x):
    """x - log(1 + x), accurate near zero where the two terms cancel."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    xs = x[small]
    # alternating series x^2/2 - x^3/3 + ...; 16 terms reach double precision for |x| < 0.1
    acc = np.zeros_like(xs)
    power = xs * xs
    for k in range(2, 18):
        acc += (-1) ** k * power / k
        power = power * xs
    out[small] = acc
    big = ~small
    out[big] = x[big] - np.log1p(x[big])
    return out


def species_energy(state: StateField, steady: SteadyState, grid: Grid) -> tuple:
    """Integrals of l - l* - l* ln(l/l*) for l = u, v, w (midpoint rule)."""
    devs = state.deviations_from(steady.as_tuple())
    out = []
    for name, field, dev, ref in zip(SPECIES, state.species(), devs, steady.as_tuple()):
        if np.any(field <= 0):
            idx = np.unravel_index(np.argmin(field), field.shape)
            raise DiagnosticsError(f"energy needs positive densities; {name} = {field[idx]!r} at cell {tuple(int(i) for i in idx)}")
        out.append(float(ref * relative_entropy(dev / ref).sum() * grid.cell_volume))
    return tuple(out)


def lyapunov_energy(state: StateField, steady: SteadyState, params: ModelParams, grid: Grid) -> float:
    eu, ev, ew = species_energy(state, steady, grid)
    return eu / params.b3 + ev / params.b2 + ew


def matrix_A(params: ModelParams) -> np.ndarray:
    b1, b2, b3 = params.b1, params.b2, params.b3
    off = (b1 * b2 - b3) / (2 * b2 * b3)
    return np.array([[1 / b3, off], [off, 1 / b2]])


def matrix_B(params: ModelParams, u_val: float, v_val: float, steady: SteadyState) -> np.ndarray:
    p = params
    us, vs, ws = steady.as_tuple()
    uv = p.chi * ws * u_val * v_val / 2
    xu = p.xi * vs * u_val / (2 * p.b2)
    return np.array(
        [
            [p.d1 * us / p.b3, -xu, -uv],
            [-xu, p.d2 * vs / p.b2, -uv],
            [-uv, -uv, ws],
        ]
    )


def leading_minors(m: np.ndarray) -> list:
    return [float(np.linalg.det(m[:k, :k])) for k in range(1, m.shape[0] + 1)]


def is_positive_definite(m: np.ndarray) -> bool:
    """Sylvester's criterion on the leading principal minors."""
    return all(d > 0 for d in leading_minors(m))


def det_A_closed_form(params: ModelParams) -> float:
    b1, b2, b3 = params.b1, params.b2, params.b3
    return (4 * b2 * b3 - (b1 * b2 - b3) ** 2) / (4 * b2**2 * b3**2)


def mass_functional(state: StateField, params: ModelParams, grid: Grid) -> float:
    b1, b2, b3 = params.b1, params.b2, params.b3
    vol = grid.cell_volume
    mu, mv, mw = (float(x.sum()) * vol for x in state.species())
    return (1 + b1 * b2 / b3) * mu + b1 * mv + b1 * b2 * mw


def _grad_norms(dev: np.ndarray, grid: Grid) -> tuple:
    faces = grad_face(dev, grid)
    if grid.dim == 1:
        faces = (faces,)
    l2 = math.sqrt(sum(float(np.sum(g * g)) for g in faces) * grid.cell_volume)
    linf = max(float(np.max(np.abs(g))) for g in faces)
    return l2, linf


def record(state: StateField, steady: Optional[SteadyState], params: ModelParams, grid: Grid) -> DiagnosticsRecord:
    """One row of diagnostics. Fields that need a steady state, or positive
    densities for the energy, are NaN when those are unavailable."""
    vol = grid.cell_volume
    fields = state.species()
    linf = [float(x.max()) for x in fields]
    l1 = [float(x.sum()) * vol for x in fields]
    gu_l2, gu_inf = _grad_norms(state.du, grid)
    gv_l2, gv_inf = _grad_norms(state.dv, grid)

    nan = float("nan")
    dist_inf = [nan] * 3
    dist_l2 = [nan] * 3
    energy = nan
    if steady is not None:
        devs = state.deviations_from(steady.as_tuple())
        dist_inf = [float(np.max(np.abs(d))) for d in devs]
        dist_l2 = [math.sqrt(float(np.sum(d * d)) * vol) for d in devs]
        if all(np.all(x > 0) for x in fields):
            energy = lyapunov_energy(state, steady, params, grid)

    return DiagnosticsRecord(
        state.t, *linf, gu_inf, gv_inf, *l1, *dist_inf, *dist_l2, gu_l2, gv_l2, energy,
        mass_functional(state, params, grid),
    )


def fit_decay(records: Sequence[DiagnosticsRecord], window: Optional[tuple] = None, min_samples: int = 10) -> DecayFit:
    """Least-squares fit of ln d(t) = ln C1 - C2 t, d the summed max-norm distance."""
    if window is None:
        if not records:
            raise DiagnosticsError("no records to fit")
        t_end = max(r.t for r in records)
        window = (t_end / 2, t_end)
    lo, hi = window
    picked = [r for r in records if lo <= r.t <= hi]
    if len(picked) < min_samples:
        raise DiagnosticsError(f"need at least {min_samples} records in window {window}, got {len(picked)}")
    t = np.array([r.t for r in picked])
    d = np.array([r.linf_distance for r in picked])
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise DiagnosticsError("distances in the fit window must be finite and strictly positive")
    y = np.log(d)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (intercept + slope * t)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    # relative tolerance: log-linear data leaves only rounding noise in ss_res
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(y * y))):
        r2 = 1.0
        slope = 0.0 if ss_tot == 0 else slope
    else:
        r2 = 1.0 - ss_res / ss_tot
    return DecayFit(c1=math.exp(float(intercept)), c2=-float(slope), r_squared=r2, window=(lo, hi), samples=len(picked))


def definiteness_threshold(params: ModelParams, steady: SteadyState, u_max: float, v_max: float,
                           which: str, upper: float = 1e6, rel_tol: float = 1e-10) -> float:
    """Largest xi (or chi), others fixed, keeping matrix_B positive definite at (u_max, v_max).

    Returns 0 when B is not positive definite even with the coefficient at
    zero, and ``inf`` when it stays definite up to ``upper``.
    """
    if which not in ("xi", "chi"):
        raise ValueError("which must be 'xi' or 'chi'")

    def ok(value):
        return is_positive_definite(matrix_B(params.replace(**{which: value}), u_max, v_max, steady))

    if not ok(0.0):
        return 0.0
    lo, hi = 0.0, 1e-3
    while ok(hi):
        lo, hi = hi, hi * 2
        if hi > upper:
            return math.inf
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
