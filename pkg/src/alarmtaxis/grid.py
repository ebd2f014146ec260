"""Uniform cell-centred finite-volume grid and Neumann operators.

Cell arrays have shape ``(n,)`` in 1D and ``(nx, ny)`` in 2D (axis 0 is x).
Face arrays hold every face normal to one axis, boundary faces included, so a
1D face array has ``n + 1`` entries and a 2D grid returns one such array per
axis. Boundary faces always carry zero flux.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    n: tuple
    length: tuple

    def __post_init__(self):
        n = tuple(int(k) for k in np.atleast_1d(self.n))
        length = tuple(float(x) for x in np.atleast_1d(self.length))
        if len(length) == 1 and len(n) == 2:
            length = length * 2
        if len(n) not in (1, 2) or len(length) != len(n):
            raise ValueError(f"grid must be 1D or 2D with one length per axis, got n={n}, length={length}")
        if any(k < 4 for k in n):
            raise ValueError(f"need at least 4 cells per axis, got {n}")
        if any(not np.isfinite(x) or x <= 0 for x in length):
            raise ValueError(f"domain lengths must be positive, got {length}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", length)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple:
        return tuple(L / k for L, k in zip(self.length, self.n))

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.length))

    @cached_property
    def centers(self) -> tuple:
        """Cell-centre coordinates per axis (1D arrays)."""
        return tuple((np.arange(k) + 0.5) * hk for k, hk in zip(self.n, self.h))

    def mesh(self) -> tuple:
        """Broadcastable coordinate arrays matching the cell shape."""
        if self.dim == 1:
            return self.centers
        return tuple(np.meshgrid(*self.centers, indexing="ij"))

    def check(self, field: np.ndarray, name: str = "field") -> np.ndarray:
        field = np.asarray(field, dtype=np.float64)
        if field.shape != self.shape:
            raise ValueError(f"{name} has shape {field.shape}, grid expects {self.shape}")
        return field


def _pad_faces(interior: np.ndarray, axis: int) -> np.ndarray:
    widths = [(0, 0)] * interior.ndim
    widths[axis] = (1, 1)
    return np.pad(interior, widths)


def _face_divergence(faces, grid: Grid) -> np.ndarray:
    if grid.dim == 1:
        faces = (faces,)
    out = np.zeros(grid.shape)
    for axis, (f, hk) in enumerate(zip(faces, grid.h)):
        out += np.diff(f, axis=axis) / hk
    return out


def grad_face(field, grid: Grid):
    """Two-point normal derivative on every face; zero on boundary faces."""
    field = grid.check(field)
    faces = tuple(_pad_faces(np.diff(field, axis=ax) / hk, ax) for ax, hk in enumerate(grid.h))
    return faces[0] if grid.dim == 1 else faces


def laplacian(field, grid: Grid) -> np.ndarray:
    """Second-order Laplacian with zero-flux (reflected ghost cell) boundaries."""
    return _face_divergence(grad_face(field, grid), grid)


def upwind_flux(carrier, potential, coeff: float, grid: Grid):
    """Face fluxes coeff * carrier_upwind * grad(potential)."""
    carrier = grid.check(carrier, "carrier")
    if np.any(carrier < 0):
        idx = np.unravel_index(np.argmin(carrier), carrier.shape)
        raise ValueError(f"carrier must be nonnegative, found {carrier[idx]!r} at cell {idx}")
    grads = grad_face(potential, grid)
    if grid.dim == 1:
        grads = (grads,)
    fluxes = []
    for axis, g in enumerate(grads):
        vel = coeff * np.take(g, np.arange(1, g.shape[axis] - 1), axis=axis)
        left = np.take(carrier, np.arange(0, carrier.shape[axis] - 1), axis=axis)
        right = np.take(carrier, np.arange(1, carrier.shape[axis]), axis=axis)
        fluxes.append(_pad_faces(vel * np.where(vel > 0, left, right), axis))
    return fluxes[0] if grid.dim == 1 else tuple(fluxes)


def taxis_divergence(carrier, potential, coeff: float, grid: Grid) -> np.ndarray:
    """Conservative upwind discretisation of -div(coeff * carrier * grad(potential)).

    The carrier is taken from the upwind side of each face, which for
    coeff > 0 is the cell with the lower potential.
    """
    return -_face_divergence(upwind_flux(carrier, potential, coeff, grid), grid)


def product_field(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def max_face_speed(potential, coeff: float, grid: Grid) -> float:
    grads = grad_face(potential, grid)
    if grid.dim == 1:
        grads = (grads,)
    return max(float(np.max(np.abs(coeff * g))) for g in grads)
