"""Acceptance criteria 1-9, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py`` (lines are repeated in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
``ALARMTAXIS_ACCEPT_RUNS`` lowers the number of random initial conditions
per grid for quick local iteration; the criterion itself asks for 50.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

from alarmtaxis.diagnostics import (
    DiagnosticsRecord,
    fit_decay,
    is_positive_definite,
    matrix_A,
    matrix_B,
    record,
)
from alarmtaxis.experiment import random_smooth_field
from alarmtaxis.grid import Grid, laplacian, taxis_divergence
from alarmtaxis.integrate import StepConfig, StepError, run
from alarmtaxis.params import ModelParams, SteadyState, solve_steady_state, steady_state_residual, validate_hypothesis
from alarmtaxis.state import StateField

RESULTS: list = []
N_RANDOM = int(os.environ.get("ALARMTAXIS_ACCEPT_RUNS", "50"))
REFERENCE = dict(b1=0.5, b2=0.4, b3=0.1)


def report(label: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def bisect(f, lo, hi, tol=1e-13):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# 1 ---------------------------------------------------------------------------


def test_criterion_1_steady_state_oracle():
    p = ModelParams(**REFERENCE, sigma=2.0)
    w_oracle = bisect(lambda w: 1.5 * w * w + 0.4 * w - 4.0, 0.0, 4.0)
    ss = solve_steady_state(p)
    resid = max(abs(r) for r in steady_state_residual(p, ss.as_tuple()))
    timings = []
    for _ in range(50):
        t0 = time.perf_counter()
        solve_steady_state(p)
        timings.append(time.perf_counter() - t0)
    runtime = min(timings)
    ok = abs(ss.w_star - w_oracle) < 1e-8 and resid < 1e-8 and runtime < 1e-3
    report("1", ok, f"w* = {ss.w_star:.12f}, |dw*| = {abs(ss.w_star - w_oracle):.1e}, residual = {resid:.1e}, "
                    f"runtime = {runtime * 1e6:.0f} us")
    assert ok


# 2 ---------------------------------------------------------------------------

VIOLATIONS = {
    "h_b1": [(1.2, 0.3, 0.2), (1.1, 0.25, 0.2), (1.5, 0.2, 0.25), (1.05, 0.4, 0.1), (2.0, 0.2, 0.3)],
    "h_b3": [(0.5, 0.2, 0.1), (0.5, 0.2, 0.15), (0.4, 0.3, 0.15), (1.0, 0.2, 0.25), (0.2, 0.25, 0.2)],
    "h_sum": [(0.5, 0.5, 0.2), (0.8, 0.4, 0.2), (1.0, 0.45, 0.1), (0.6, 0.5, 0.05), (0.9, 0.6, 0.3)],
    "stability": [(1.0, 0.4, 0.01), (1.0, 0.45, 0.02), (0.9, 0.4, 0.01), (0.8, 0.3, 0.005), (1.0, 0.2, 0.005)],
}


def _direct_checks(b1, b2, b3):
    return {"h_b1": b1 <= 1, "h_b3": b3 < b1 * b2, "h_sum": b2 + b3 <= 0.5, "stability": (b1 * b2 - b3) ** 2 < 4 * b2 * b3}


def test_criterion_2_hypothesis_checks():
    t0 = time.perf_counter()
    reference = validate_hypothesis(ModelParams(**REFERENCE))
    bad = []
    for intended, triples in VIOLATIONS.items():
        for triple in triples:
            rep = validate_hypothesis(ModelParams(b1=triple[0], b2=triple[1], b3=triple[2]))
            flags = {k: getattr(rep, k) for k in ("h_b1", "h_b3", "h_sum", "stability")}
            failed = [k for k, v in flags.items() if not v]
            direct = [k for k, v in _direct_checks(*triple).items() if not v]
            if failed != [intended] or direct != [intended]:
                bad.append((triple, failed))
    runtime = time.perf_counter() - t0
    n = sum(len(v) for v in VIOLATIONS.values())
    ok = reference.all_pass and not bad and n == 20 and runtime < 1.0
    report("2", ok, f"reference params pass all 4 checks: {reference.all_pass}; {n - len(bad)}/{n} violating triples fail "
                    f"exactly the intended check; runtime = {runtime * 1e3:.1f} ms")
    assert ok, bad


# 3 and 4 ---------------------------------------------------------------------

NORM_FIELDS = ("linf_u", "linf_v", "linf_w", "grad_linf_u", "grad_linf_v", "l1_u", "l1_v", "l1_w",
               "l2_dist_u", "l2_dist_v", "l2_dist_w", "grad_l2_u", "grad_l2_v")
RECORD_EVERY = 0.05


def _random_run(job):
    dim, seed = job
    p = ModelParams(**REFERENCE, d1=1.0, d2=1.0, xi=0.05, chi=0.05, sigma=2.0)
    steady = solve_steady_state(p)
    grid = Grid(128, 1.0) if dim == 1 else Grid((64, 64), 1.0)
    rng = np.random.default_rng([dim, seed])
    state = StateField.from_densities(*(random_smooth_field(grid, rng) for _ in range(3)))
    k1 = max(1.0, float(state.u.max()))
    out = {"dim": dim, "seed": seed, "k1": k1, "min_cell": math.inf, "max_u_excess": -math.inf, "error": None,
           "early": {k: 0.0 for k in NORM_FIELDS}, "late": {k: 0.0 for k in NORM_FIELDS}, "checks": 0}
    next_record = [0.0]

    def observe(s):
        # every accepted-step cadence: positivity and the comparison bound
        out["checks"] += 1
        out["min_cell"] = min(out["min_cell"], *(float(x.min()) for x in s.species()))
        out["max_u_excess"] = max(out["max_u_excess"], float(s.u.max()) - k1)
        if s.t >= next_record[0] - 1e-12:
            rec = record(s, steady, p, grid)
            bucket = out["early"] if rec.t <= 1.0 else out["late"]
            for k in NORM_FIELDS:
                bucket[k] = max(bucket[k], getattr(rec, k))
            next_record[0] += RECORD_EVERY

    try:
        run(state, p, grid, StepConfig(t_end=20.0), observer=observe, stop_times=[1.0])
    except StepError as exc:
        out["error"] = str(exc)
    return out


@pytest.fixture(scope="module")
def random_runs():
    jobs = [(dim, seed) for dim in (1, 2) for seed in range(N_RANDOM)]
    workers = len(os.sched_getaffinity(0))
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_random_run, jobs))
    else:
        results = [_random_run(j) for j in jobs]
    return results, time.perf_counter() - t0


def test_criterion_3_positivity_and_comparison_bound(random_runs):
    results, elapsed = random_runs
    errors = [r for r in results if r["error"]]
    min_cell = min(r["min_cell"] for r in results)
    excess = max(r["max_u_excess"] for r in results)
    checks = sum(r["checks"] for r in results)
    ok = not errors and min_cell >= 0 and excess <= 1e-6 and len(results) == 2 * N_RANDOM
    per = {d: sum(1 for r in results if r["dim"] == d) for d in (1, 2)}
    report("3", ok, f"{per[1]} runs on 1D n=128 + {per[2]} runs on 64x64 to t=20: step errors = {len(errors)}, "
                    f"min cell = {min_cell:.3e}, max(u - K1) = {excess:.3e} over {checks} checks, {elapsed:.0f} s")
    assert ok, errors[:3]


def test_criterion_4_no_blow_up(random_runs):
    results, _ = random_runs
    worst = (0.0, None, None)
    for r in results:
        for k in NORM_FIELDS:
            early, late = r["early"][k], r["late"][k]
            ratio = late / early if early > 0 else (0.0 if late == 0 else math.inf)
            if ratio > worst[0]:
                worst = (ratio, k, (r["dim"], r["seed"]))
    ok = worst[0] < 5.0 and not any(r["error"] for r in results)
    report("4", ok, f"max over runs and {len(NORM_FIELDS)} norms of max_[1,20] / max_[0,1] = {worst[0]:.3f} "
                    f"({worst[1]}, run {worst[2]})")
    assert ok


# 5 and 6 ---------------------------------------------------------------------


def _convergence_run(n, cfl_safety=0.8, dt_max=0.01, cadence=10, record_interval=None):
    p = ModelParams(**REFERENCE, xi=0.02, chi=0.02, sigma=2.0)
    steady = solve_steady_state(p)
    grid = Grid(n, 1.0)
    x = grid.centers[0]
    devs = [0.1 * ref * np.cos(m * np.pi * x) for ref, m in zip(steady.as_tuple(), (1, 2, 1))]
    state = StateField.about(steady, *devs)
    records: list[DiagnosticsRecord] = []
    cfg = StepConfig(t_end=60.0, cfl_safety=cfl_safety, dt_max=dt_max, cadence=cadence, record_interval=record_interval)
    run(state, p, grid, cfg, observer=lambda s: records.append(record(s, steady, p, grid)))
    return p, steady, records


@pytest.fixture(scope="module")
def convergence():
    t0 = time.perf_counter()
    base = _convergence_run(64)
    half_dt = _convergence_run(64, cfl_safety=0.4, dt_max=0.005, cadence=0, record_interval=0.1)
    double_n = _convergence_run(128, cadence=0, record_interval=0.1)
    return base, half_dt, double_n, time.perf_counter() - t0


def test_criterion_5_exponential_convergence(convergence):
    (p, steady, recs), (_, _, recs_dt), (_, _, recs_n), elapsed = convergence
    fit = fit_decay(recs, (30.0, 60.0))
    fit_dt = fit_decay(recs_dt, (30.0, 60.0))
    fit_n = fit_decay(recs_n, (30.0, 60.0))
    final = recs[-1].linf_distance
    drift = max(abs(fit_dt.c2 - fit.c2), abs(fit_n.c2 - fit.c2)) / fit.c2
    ok = fit.c2 > 0 and fit.r_squared > 0.99 and final < 1e-3 and drift < 0.2 and recs[-1].t == 60.0
    report("5", ok, f"C2 = {fit.c2:.5f} (r^2 = {fit.r_squared:.5f}, {fit.samples} samples on [30, 60]), "
                    f"final distance = {final:.2e}, C2 with dt/2 = {fit_dt.c2:.5f}, with 2n = {fit_n.c2:.5f}, "
                    f"max relative change = {drift:.1e}, {elapsed:.0f} s")
    assert ok


def test_criterion_6_lyapunov_monotonicity(convergence):
    (p, steady, recs), *_ = convergence
    energy = np.array([r.energy for r in recs])
    t = np.array([r.t for r in recs])
    e0 = energy[0]
    after = energy[t >= 1.0]
    worst_rise = float(np.max(np.diff(after))) if after.size > 1 else 0.0
    umax = max(r.linf_u for r in recs)
    vmax = max(r.linf_v for r in recs)
    b_pd = is_positive_definite(matrix_B(p, umax, vmax, steady)) and is_positive_definite(matrix_A(p))
    ok = (np.all(np.isfinite(energy)) and np.all(energy >= 0) and worst_rise <= 1e-9 * e0
          and energy[-1] < 1e-6 * e0 and b_pd)
    report("6", ok, f"E(0) = {e0:.4e}, largest step increase for t >= 1 = {worst_rise:.2e} "
                    f"(tolerance {1e-9 * e0:.2e}), min E = {energy.min():.2e}, E(60)/E(0) = {energy[-1] / e0:.2e}, "
                    f"A and B positive definite at run maxima: {b_pd}")
    assert ok


# 7 ---------------------------------------------------------------------------


def test_criterion_7_matrix_identities():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        b1, b2, b3 = rng.uniform(0.01, 1.0, 3)
        p = ModelParams(b1=b1, b2=b2, b3=b3)
        closed = (4 * b2 * b3 - (b1 * b2 - b3) ** 2) / (4 * b2**2 * b3**2)
        worst = max(worst, abs(np.linalg.det(matrix_A(p)) - closed) / abs(closed))
    disagree_a = disagree_b = 0
    for _ in range(1000):
        b1, b2, b3 = rng.uniform(0.01, 1.0, 3)
        p = ModelParams(b1=b1, b2=b2, b3=b3, d1=rng.uniform(0.05, 3), d2=rng.uniform(0.05, 3),
                        xi=rng.uniform(0, 5), chi=rng.uniform(0, 5))
        A = matrix_A(p)
        disagree_a += is_positive_definite(A) != bool(np.linalg.eigvalsh(A).min() > 0)
        ref = SteadyState(*rng.uniform(0.05, 2.0, 3))
        B = matrix_B(p, rng.uniform(0, 3), rng.uniform(0, 3), ref)
        disagree_b += is_positive_definite(B) != bool(np.linalg.eigvalsh(B).min() > 0)
    ok = worst <= 1e-12 and disagree_a == 0 and disagree_b == 0
    report("7", ok, f"max relative det A error = {worst:.1e} over 1000 triples; predicate/eigenvalue "
                    f"disagreements: A {disagree_a}/1000, B {disagree_b}/1000")
    assert ok


# 8 ---------------------------------------------------------------------------


def _operator_errors(dim, n):
    g = Grid(n if dim == 1 else (n, n), 1.0)
    if dim == 1:
        (x,) = g.mesh()
        f = np.cos(np.pi * x)
        lap = -np.pi**2 * f
        c, pot = 1 + 0.5 * np.cos(np.pi * x), np.cos(2 * np.pi * x)
        tax = -((-0.5 * np.pi * np.sin(np.pi * x)) * (-2 * np.pi * np.sin(2 * np.pi * x)) + c * (-4 * np.pi**2 * pot))
    else:
        x, y = g.mesh()
        f = np.cos(np.pi * x) * np.cos(np.pi * y)
        lap = -2 * np.pi**2 * f
        c, pot = 1 + 0.5 * f, np.cos(np.pi * x) * np.cos(2 * np.pi * y)
        cx, cy = -0.5 * np.pi * np.sin(np.pi * x) * np.cos(np.pi * y), -0.5 * np.pi * np.cos(np.pi * x) * np.sin(np.pi * y)
        px, py = -np.pi * np.sin(np.pi * x) * np.cos(2 * np.pi * y), -2 * np.pi * np.cos(np.pi * x) * np.sin(2 * np.pi * y)
        tax = -(cx * px + cy * py + c * (-5 * np.pi**2 * pot))
    return np.abs(laplacian(f, g) - lap).max(), np.abs(taxis_divergence(c, pot, 1.0, g) - tax).max()


def test_criterion_8_operator_properties():
    rng = np.random.default_rng(8)
    worst = worst_input = 0.0
    for k in range(100):
        if k % 2:
            g = Grid(int(rng.integers(8, 257)), rng.uniform(0.5, 3.0))
        else:
            g = Grid((int(rng.integers(8, 97)), int(rng.integers(8, 97))), (rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)))
        f, c = rng.random(g.shape), rng.random(g.shape)
        for out, src in ((laplacian(f, g), f), (taxis_divergence(c, f, rng.uniform(-3, 3), g), c)):
            # exact summation so only the operator's own telescoping is measured;
            # scaled by the output's L1 size since the operators carry 1/h and 1/h^2
            net = abs(math.fsum(out.ravel()))
            worst = max(worst, net / np.abs(out).sum())
            worst_input = max(worst_input, net / np.abs(src).sum())
    ns = np.array([32, 64, 128, 256])
    orders = {}
    for dim in (1, 2):
        errs = np.array([_operator_errors(dim, n) for n in ns])
        orders[dim] = (-np.polyfit(np.log(ns), np.log(errs[:, 0]), 1)[0], -np.polyfit(np.log(ns), np.log(errs[:, 1]), 1)[0])
    ok = worst <= 1e-12 and all(abs(lo - 2) < 0.1 and to >= 1.0 for lo, to in orders.values())
    report("8", ok, f"max |cell-sum| / L1(output) = {worst:.1e} over 100 fields "
                    f"(/ L1(input) = {worst_input:.1e}); observed orders (laplacian, taxis): "
                    f"1D ({orders[1][0]:.3f}, {orders[1][1]:.3f}), 2D ({orders[2][0]:.3f}, {orders[2][1]:.3f})")
    assert ok


# 9 ---------------------------------------------------------------------------

DETERMINISM_CONFIG = """
[grid]
n = 48
[initial]
kind = random_smooth
seed = 7
[time]
t_end = 2
"""


def test_criterion_9_determinism(tmp_path):
    cfg = tmp_path / "det.ini"
    cfg.write_text(DETERMINISM_CONFIG)
    blobs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        subprocess.run([sys.executable, "-m", "alarmtaxis.cli", "simulate", "--config", str(cfg), "--out", str(out),
                        "--quiet"], check=True)
        blobs.append((out / "timeseries.csv").read_bytes())
    ok = blobs[0] == blobs[1] and len(blobs[0]) > 0
    rows = blobs[0].count(b"\n") - 1
    report("9", ok, f"two executions of one config: timeseries.csv byte-identical = {blobs[0] == blobs[1]} "
                    f"({len(blobs[0])} bytes, {rows} records)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
