"""Explicit positivity-preserving time integration."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from . import kernels
from .grid import Grid, laplacian, taxis_divergence
from .params import ModelParams
from .state import StateField, reaction_offsets

log = logging.getLogger(__name__)

SPECIES = ("u", "v", "w")


class Method(str, enum.Enum):
    EXPLICIT_EULER = "explicit_euler"
    RK2_SSP = "rk2_ssp"

    @property
    def code(self) -> int:
        return 0 if self is Method.EXPLICIT_EULER else 1


class StepError(RuntimeError):
    """A step produced an inadmissible state; ``t`` is the last valid time."""

    def __init__(self, message, *, t=None, species=None, cell=None):
        super().__init__(message)
        self.t = t
        self.species = species
        self.cell = cell


class PositivityError(StepError):
    pass


class NonFiniteError(StepError):
    pass


class StepLimitError(StepError):
    pass


@dataclass(frozen=True)
class StepConfig:
    t_end: float = 1.0
    cfl_safety: float = 0.8
    dt_max: float = 0.01
    method: Method = Method.RK2_SSP
    cadence: int = 10
    record_interval: Optional[float] = None
    max_steps: int = 50_000_000

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.dt_max > 0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.cadence < 0:
            raise ValueError("cadence must be a nonnegative step count")
        if self.record_interval is not None and not self.record_interval > 0:
            raise ValueError("record_interval must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


def _alarm_potential(state: StateField) -> np.ndarray:
    # grad(uv) with the constant base product removed
    U, V, _ = state.base
    return U * state.dv + V * state.du + state.du * state.dv


def reaction_terms(state: StateField, params: ModelParams) -> tuple:
    """Pointwise reaction right-hand sides (f_u, f_v, f_w)."""
    p = params
    c = reaction_offsets(p, state)
    a, b, d = state.du, state.dv, state.dw
    W = state.base[2]
    if p.sigma == 2.0:
        gap = -d * (2.0 * W + d)
    elif W > 0:
        gap = -(W**p.sigma) * np.expm1(p.sigma * np.log1p(d / W))
    else:
        gap = -np.where(d > 0, np.abs(d) ** p.sigma, 0.0)
    return (
        state.u * (c[0] - p.r1 * a - p.b1 * b - p.b3 * d),
        state.v * (c[1] - p.r2 * b + a - p.b2 * d),
        state.w * (c[2] + p.r3 * gap + a + b),
    )


def rhs(state: StateField, params: ModelParams, grid: Grid) -> tuple:
    """Full semi-discrete right-hand side assembled from the grid operators."""
    fu, fv, fw = reaction_terms(state, params)
    du = params.d1 * laplacian(state.du, grid) + fu
    dv = params.d2 * laplacian(state.dv, grid) + taxis_divergence(state.v, state.du, params.xi, grid) + fv
    dw = laplacian(state.dw, grid) + taxis_divergence(state.w, _alarm_potential(state), params.chi, grid) + fw
    return du, dv, dw


def reaction_rate_bound(params: ModelParams, umax: float, vmax: float, wmax: float) -> float:
    """Row-sum bound on the reaction Jacobian for densities up to the given maxima."""
    p = params
    return max(
        p.r1 * (1 + 2 * umax) + p.b1 * vmax + p.b3 * wmax + (p.b1 + p.b3) * umax,
        p.r2 * (1 + 2 * vmax) + umax + p.b2 * wmax + (1 + p.b2) * vmax,
        p.r3 * (1 + (p.sigma + 1) * wmax**p.sigma) + umax + vmax + 2 * wmax,
    )


def _axis_speeds(state: StateField, params: ModelParams, grid: Grid) -> list:
    speeds = []
    for ax, h in enumerate(grid.h):
        gu = np.diff(state.du, axis=ax) / h
        gp = np.diff(_alarm_potential(state), axis=ax) / h
        s = max(float(np.max(np.abs(params.xi * gu), initial=0.0)), float(np.max(np.abs(params.chi * gp), initial=0.0)))
        speeds.append(s)
    return speeds


def stable_limits(state: StateField, params: ModelParams, grid: Grid) -> dict:
    """Diffusive, advective and reaction step limits (inverse outflow rates).

    The advective limit counts both faces of a cell, since a local minimum of
    the potential loses carrier through all of them.
    """
    dmax = max(params.d1, params.d2, 1.0)
    adv_rate = sum(2.0 * s / h for h, s in zip(grid.h, _axis_speeds(state, params, grid)))
    dens = [max(float(x.max()), 0.0) for x in state.species()]
    return {
        "diffusive": 1.0 / (2.0 * dmax * sum(1.0 / h**2 for h in grid.h)),
        "advective": 1.0 / adv_rate if adv_rate > 0 else np.inf,
        "reaction": 1.0 / reaction_rate_bound(params, *dens),
    }


def stable_dt(state: StateField, params: ModelParams, grid: Grid, cfg: StepConfig) -> float:
    """CFL step ``safety / (sum of the inverse limits)``, capped at ``dt_max``.

    A plain minimum of the three limits can let a cell's combined outflow
    exceed its content in one Euler stage; summing the rates cannot.
    """
    rate = sum(1.0 / lim for lim in stable_limits(state, params, grid).values())
    return min(cfg.cfl_safety / rate, cfg.dt_max)


def _kernel_args(state: StateField, params: ModelParams, grid: Grid):
    shape2d = state.shape if grid.dim == 2 else (state.shape[0], 1)
    arrays = [np.ascontiguousarray(x, dtype=np.float64).reshape(shape2d).copy() for x in (state.du, state.dv, state.dw)]
    hx = grid.h[0]
    hy = grid.h[1] if grid.dim == 2 else 1.0
    consts = (
        params.as_array(),
        np.asarray(state.base, dtype=np.float64),
        np.asarray(reaction_offsets(params, state), dtype=np.float64),
        hx,
        hy,
        grid.dim,
    )
    return arrays, consts


def _raise_for(status, species, where, t, shape):
    cell = np.unravel_index(where, shape) if where >= 0 else None
    cell = tuple(int(i) for i in cell) if cell is not None else None
    name = SPECIES[species] if species >= 0 else "?"
    if status == 1:
        raise PositivityError(
            f"negative {name} at cell {cell} after t = {t:.6g}; time step violates the CFL bound",
            t=t, species=name, cell=cell,
        )
    raise NonFiniteError(f"non-finite {name} at cell {cell} after t = {t:.6g}", t=t, species=name, cell=cell)


def step(state: StateField, params: ModelParams, grid: Grid, dt: float, method=Method.RK2_SSP) -> StateField:
    """One explicit step of size ``dt``. Raises instead of clipping negative values."""
    grid.check(state.du, "u")
    method = Method(method)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    arrays, consts = _kernel_args(state, params, grid)
    t_new = state.t + dt
    _, n, status, species, where, _ = kernels.advance(*arrays, *consts, state.t, t_new, 1, 1.0, dt, dt, method.code)
    if status:
        _raise_for(status, species, where, state.t, state.shape)
    return StateField(*(x.reshape(state.shape) for x in arrays), t=t_new, base=state.base, at_equilibrium=state.at_equilibrium)


def run(
    initial: StateField,
    params: ModelParams,
    grid: Grid,
    cfg: StepConfig,
    observer: Optional[Callable[[StateField], None]] = None,
    stop_times: Iterable[float] = (),
) -> StateField:
    """Integrate from ``initial.t`` to ``cfg.t_end``.

    The observer sees the initial state, every ``cfg.cadence`` accepted
    steps, and each stop time (``stop_times``, multiples of
    ``cfg.record_interval`` and ``t_end``), which the integrator lands on
    exactly.
    """
    grid.check(initial.du, "u")
    for name, x in zip(SPECIES, initial.species()):
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise ValueError(f"initial {name} must be finite and nonnegative")
        if not np.any(x > 0):
            raise ValueError(f"initial {name} is identically zero")

    t0 = initial.t
    stops = {float(cfg.t_end)}
    stops.update(float(s) for s in stop_times if t0 < s < cfg.t_end)
    if cfg.record_interval:
        k = 1
        while t0 + k * cfg.record_interval < cfg.t_end * (1 - 1e-12):
            stops.add(t0 + k * cfg.record_interval)
            k += 1
    stops = sorted(s for s in stops if s > t0)

    arrays, consts = _kernel_args(initial, params, grid)
    state = initial.copy()

    def snapshot(t):
        return StateField(*(x.reshape(initial.shape).copy() for x in arrays), t=t, base=initial.base,
                          at_equilibrium=initial.at_equilibrium)

    if observer:
        observer(state)
    t = t0
    total = 0
    chunk_max = cfg.cadence if cfg.cadence > 0 else cfg.max_steps
    for stop in stops:
        while t < stop:
            budget = min(chunk_max, cfg.max_steps - total)
            if budget <= 0:
                raise StepLimitError(f"step limit {cfg.max_steps} reached at t = {t:.6g}", t=t)
            t, n, status, species, where, dt = kernels.advance(
                *arrays, *consts, t, stop, budget, cfg.cfl_safety, cfg.dt_max, 0.0, cfg.method.code
            )
            total += n
            if status:
                _raise_for(status, species, where, t, initial.shape)
            if observer and (t == stop or (cfg.cadence and n == budget)):
                observer(snapshot(t))
    log.debug("integrated to t = %g in %d steps", t, total)
    state = snapshot(t)
    return state
