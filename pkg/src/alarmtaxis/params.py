"""Model coefficients, parameter hypotheses and the coexistence steady state."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("d1", "d2", "xi", "chi", "r1", "r2", "r3", "b1", "b2", "b3", "sigma")
TAXIS_NAMES = ("xi", "chi")


class SteadyStateError(ValueError):
    """Raised when no positive coexistence state can be produced."""


@dataclass(frozen=True)
class ModelParams:
    d1: float = 1.0
    d2: float = 1.0
    xi: float = 0.05
    chi: float = 0.05
    r1: float = 1.0
    r2: float = 1.0
    r3: float = 1.0
    b1: float = 0.5
    b2: float = 0.4
    b3: float = 0.1
    sigma: float = 2.0

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            # taxis coefficients may vanish (the taxis-free limit)
            if not math.isfinite(value) or value < 0 or (value == 0 and name not in TAXIS_NAMES):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def verified(self) -> bool:
        """True when sigma > 1, the regime where solutions are known to stay bounded."""
        return self.sigma > 1

    @property
    def unit_growth(self) -> bool:
        return self.r1 == 1 and self.r2 == 1 and self.r3 == 1

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in PARAM_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class SteadyState:
    u_star: float
    v_star: float
    w_star: float
    verified: bool = True

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.u_star, self.v_star, self.w_star)


@dataclass(frozen=True)
class HypothesisReport:
    h_b1: bool
    h_b3: bool
    h_sum: bool
    stability: bool
    margins: dict

    @property
    def all_pass(self) -> bool:
        return self.h_b1 and self.h_b3 and self.h_sum and self.stability

    @property
    def hypothesis(self) -> bool:
        return self.h_b1 and self.h_b3 and self.h_sum

    def as_dict(self) -> dict:
        return {
            "h_b1": self.h_b1,
            "h_b3": self.h_b3,
            "h_sum": self.h_sum,
            "stability": self.stability,
            "margins": dict(self.margins),
        }

    def lines(self) -> list[str]:
        rows = [
            ("h_b1", self.h_b1, "b1 <= 1"),
            ("h_b3", self.h_b3, "b3 < b1*b2"),
            ("h_sum", self.h_sum, "b2 + b3 <= 1/2"),
            ("stability", self.stability, "(b1*b2 - b3)^2 < 4*b2*b3"),
        ]
        return [
            f"{'PASS' if ok else 'FAIL'} {name:<9} {label:<26} margin = {self.margins[name]:+.6g}"
            for name, ok, label in rows
        ]


def validate_hypothesis(params: ModelParams) -> HypothesisReport:
    """Check the predation coefficients against the coexistence/stability conditions.

    Margins are signed so that a check passes when its margin is >= 0
    (non-strict checks) or > 0 (strict checks).
    """
    b1, b2, b3 = params.b1, params.b2, params.b3
    margins = {
        "h_b1": 1.0 - b1,
        "h_b3": b1 * b2 - b3,
        "h_sum": 0.5 - (b2 + b3),
        "stability": 4.0 * b2 * b3 - (b1 * b2 - b3) ** 2,
    }
    return HypothesisReport(
        h_b1=margins["h_b1"] >= 0,
        h_b3=margins["h_b3"] > 0,
        h_sum=margins["h_sum"] >= 0,
        stability=margins["stability"] > 0,
        margins=margins,
    )


def steady_state_residual(params: ModelParams, candidate) -> tuple[float, float, float]:
    u, v, w = (float(c) for c in candidate)
    return (
        u + params.b1 * v + params.b3 * w - 1.0,
        -u + v + params.b2 * w - 1.0,
        w**params.sigma - u - v - 1.0,
    )


def reduced_equation(params: ModelParams, w: float) -> float:
    """Scalar equation for w* obtained by eliminating u and v; equals -4 at w = 0."""
    b1, b2, b3 = params.b1, params.b2, params.b3
    return (b1 + 1.0) * w**params.sigma + (b2 + 2.0 * b3 - b1 * b2) * w - 4.0


def back_substitute(params: ModelParams, w: float) -> tuple[float, float]:
    b1, b2, b3 = params.b1, params.b2, params.b3
    u = ((1.0 - b1) - (b3 - b1 * b2) * w) / (b1 + 1.0)
    v = (2.0 - (b2 + b3) * w) / (b1 + 1.0)
    return u, v


def bracket_root(params: ModelParams, upper: float = 4.0, max_expansions: int = 64):
    """Return (lo, hi) with J(lo) < 0 < J(hi), doubling hi when needed."""
    hi = upper
    for _ in range(max_expansions):
        if reduced_equation(params, hi) > 0:
            return 0.0, hi
        hi *= 2.0
    raise SteadyStateError(f"could not bracket the root of J within {max_expansions} expansions")


def solve_steady_state(params: ModelParams, tol: float = 1e-12) -> SteadyState:
    """Coexistence state with unit growth rates.

    Bisection is carried until the bracket can no longer shrink in double
    precision, so the result sits at the floating-point root; ``tol`` is the
    acceptance bound on |J(w*)|.
    """
    if not params.unit_growth:
        raise SteadyStateError("steady-state analysis requires unit growth rates (r1 = r2 = r3 = 1)")
    in_hypothesis = validate_hypothesis(params).hypothesis

    lo, hi = bracket_root(params)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if reduced_equation(params, mid) > 0:
            hi = mid
        else:
            lo = mid
    w = lo if abs(reduced_equation(params, lo)) <= abs(reduced_equation(params, hi)) else hi

    if abs(reduced_equation(params, w)) >= tol:
        raise SteadyStateError(f"|J(w*)| = {abs(reduced_equation(params, w)):.3e} exceeds tol = {tol:g}")
    u, v = back_substitute(params, w)
    if min(u, v, w) <= 0:
        raise SteadyStateError(
            f"no positive coexistence state: (u*, v*, w*) = ({u:.6g}, {v:.6g}, {w:.6g})"
            + ("" if in_hypothesis else "; coefficients violate the coexistence hypothesis")
        )
    return SteadyState(u, v, w, verified=in_hypothesis)
