import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alarmtaxis.params import (
    ModelParams,
    SteadyStateError,
    bracket_root,
    reduced_equation,
    solve_steady_state,
    steady_state_residual,
    validate_hypothesis,
)


def bisect_oracle(f, lo, hi, tol=1e-13):
    # deliberately naive: fixed-tolerance interval halving
    flo = f(lo)
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if (f(mid) > 0) == (flo > 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return (lo + hi) / 2


def test_reference_steady_state_matches_oracles(ref_params):
    ss = solve_steady_state(ref_params)
    w_bisect = bisect_oracle(lambda w: 1.5 * w * w + 0.4 * w - 4, 0.0, 4.0)
    w_closed = (-0.4 + math.sqrt(0.16 + 24.0)) / 3.0
    assert abs(ss.w_star - w_bisect) < 1e-10
    assert abs(ss.w_star - w_closed) < 1e-14
    assert ss.v_star == pytest.approx((2 - 0.5 * w_closed) / 1.5, abs=1e-14)
    assert ss.u_star == pytest.approx((0.5 + 0.1 * w_closed) / 1.5, abs=1e-14)
    assert ss.verified


def test_steady_values_to_six_places(steady):
    assert steady.w_star == pytest.approx(1.505094, abs=1e-6)
    assert steady.v_star == pytest.approx(0.831635, abs=1e-6)
    assert steady.u_star == pytest.approx(0.433673, abs=1e-6)


def test_residual_examples(ref_params, steady):
    assert max(map(abs, steady_state_residual(ref_params, steady.as_tuple()))) < 1e-10
    assert steady_state_residual(ref_params, (0, 0, 0)) == (-1.0, -1.0, -1.0)
    assert steady_state_residual(ref_params, (1, 0, 0)) == (0.0, -2.0, -2.0)


@given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 1), st.floats(1.01, 4))
def test_J_at_zero_is_minus_four(b1, b2, b3, sigma):
    assert reduced_equation(ModelParams(b1=b1, b2=b2, b3=b3, sigma=sigma), 0.0) == -4.0


def test_hypothesis_examples():
    rep = validate_hypothesis(ModelParams(b1=0.5, b2=0.4, b3=0.1))
    assert rep.all_pass
    assert rep.margins["stability"] == pytest.approx(0.15, abs=1e-15)
    rep = validate_hypothesis(ModelParams(b1=1, b2=1, b3=1))
    assert rep.h_b1 and not rep.h_b3 and not rep.h_sum
    assert [line.split()[0] for line in validate_hypothesis(ModelParams()).lines()] == ["PASS"] * 4


@st.composite
def h_params(draw):
    b1 = draw(st.floats(0.05, 1.0))
    b2 = draw(st.floats(0.02, 0.48))
    b3 = draw(st.floats(0.001, 1.0)) * min(b1 * b2, 0.5 - b2) * 0.999
    sigma = draw(st.floats(1.05, 4.0))
    return ModelParams(b1=b1, b2=b2, b3=b3, sigma=sigma)


@settings(max_examples=300)
@given(h_params())
def test_solver_under_hypothesis(p):
    assert validate_hypothesis(p).hypothesis
    ss = solve_steady_state(p)
    assert 0 < ss.w_star < 4
    assert ss.u_star > 0 and ss.v_star > 0
    assert max(map(abs, steady_state_residual(p, ss.as_tuple()))) < 1e-12
    # J strictly increasing on a sample of points
    ws = np.linspace(0, 4, 50)
    js = [reduced_equation(p, w) for w in ws]
    assert all(b > a for a, b in zip(js, js[1:]))


def test_random_bracket_expansions_agree(ref_params):
    rng = np.random.default_rng(3)
    ref = solve_steady_state(ref_params).w_star
    for _ in range(100):
        lo, hi = bracket_root(ref_params, upper=float(rng.uniform(0.05, 100.0)))
        root = bisect_oracle(lambda w: reduced_equation(ref_params, w), lo, hi, tol=1e-12)
        assert abs(root - ref) < 1e-11


def test_non_unit_growth_rejected():
    with pytest.raises(SteadyStateError, match="requires unit growth rates"):
        solve_steady_state(ModelParams(r1=2.0))


def test_outside_hypothesis_flagged_unverified():
    # b2 + b3 > 1/2 but the components stay positive
    ss = solve_steady_state(ModelParams(b1=0.5, b2=0.45, b3=0.1))
    assert not ss.verified


def test_nonpositive_component_is_an_error():
    # b3 > b1 b2 with large b3 drives u* negative
    with pytest.raises(SteadyStateError):
        solve_steady_state(ModelParams(b1=0.1, b2=0.1, b3=5.0))


def test_param_validation():
    with pytest.raises(ValueError):
        ModelParams(d1=-1.0)
    with pytest.raises(ValueError):
        ModelParams(sigma=float("nan"))
    assert ModelParams(xi=0.0, chi=0.0).xi == 0.0
    assert not ModelParams(sigma=0.5).verified
