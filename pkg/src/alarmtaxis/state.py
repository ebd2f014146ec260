"""Species density fields stored as a constant base plus cell deviations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams, SteadyState


@dataclass
class StateField:
    """Cell-averaged densities ``u = base[0] + du`` etc. at time ``t``.

    With ``base = (0, 0, 0)`` the deviations are the densities themselves.
    Storing deviations about the coexistence state keeps full relative
    precision in ``u - u*`` long after it drops below the spacing of doubles
    near ``u*``; ``at_equilibrium`` marks a base that zeroes the reactions
    exactly, so the constant parts of the reaction terms are cancelled
    algebraically instead of numerically.
    """

    du: np.ndarray
    dv: np.ndarray
    dw: np.ndarray
    t: float = 0.0
    base: tuple = (0.0, 0.0, 0.0)
    at_equilibrium: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.du = np.ascontiguousarray(self.du, dtype=np.float64)
        self.dv = np.ascontiguousarray(self.dv, dtype=np.float64)
        self.dw = np.ascontiguousarray(self.dw, dtype=np.float64)
        if not (self.du.shape == self.dv.shape == self.dw.shape):
            raise ValueError("u, v, w must share one shape")
        self.base = tuple(float(b) for b in self.base)
        self.t = float(self.t)

    @classmethod
    def from_densities(cls, u, v, w, t: float = 0.0) -> "StateField":
        return cls(u, v, w, t=t)

    @classmethod
    def about(cls, steady: SteadyState, du, dv, dw, t: float = 0.0) -> "StateField":
        return cls(du, dv, dw, t=t, base=steady.as_tuple(), at_equilibrium=True)

    @classmethod
    def constant(cls, grid, u: float, v: float, w: float, t: float = 0.0) -> "StateField":
        return cls(np.full(grid.shape, u), np.full(grid.shape, v), np.full(grid.shape, w), t=t)

    @property
    def shape(self) -> tuple:
        return self.du.shape

    @property
    def u(self) -> np.ndarray:
        return self.base[0] + self.du

    @property
    def v(self) -> np.ndarray:
        return self.base[1] + self.dv

    @property
    def w(self) -> np.ndarray:
        return self.base[2] + self.dw

    def species(self) -> tuple:
        return (self.u, self.v, self.w)

    def deviations_from(self, ref) -> tuple:
        """``(u - ref[0], v - ref[1], w - ref[2])`` without forming u first."""
        return tuple((b - r) + d for b, r, d in zip(self.base, ref, (self.du, self.dv, self.dw)))

    def copy(self) -> "StateField":
        return StateField(self.du.copy(), self.dv.copy(), self.dw.copy(), self.t, self.base, self.at_equilibrium)


def reaction_offsets(params: ModelParams, state: StateField) -> np.ndarray:
    """Per-cell reaction factors evaluated at the base state.

    The reaction right-hand sides are written as
    ``u * (c_u - r1 du - b1 dv - b3 dw)`` and similarly for v and w; ``c``
    collects the base-state part of each bracket.
    """
    if state.at_equilibrium:
        return np.zeros(3)
    U, V, W = state.base
    p = params
    return np.array(
        [
            p.r1 - p.r1 * U - p.b1 * V - p.b3 * W,
            p.r2 - p.r2 * V + U - p.b2 * W,
            p.r3 - p.r3 * W**p.sigma + U + V,
        ]
    )
