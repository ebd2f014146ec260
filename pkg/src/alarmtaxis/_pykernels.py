"""Pure numpy implementation of the compiled kernels (same signatures)."""

from __future__ import annotations

import numpy as np

OK, NEGATIVE, NONFINITE = 0, 1, 2


def _w_power_gap(sigma, W, dw):
    if sigma == 2.0:
        return -dw * (2.0 * W + dw)
    if W > 0.0:
        return -(W**sigma) * np.expm1(sigma * np.log1p(dw / W))
    w = W + dw
    return -np.where(w > 0.0, np.abs(w) ** sigma, 0.0)


def _face_terms(a, b, c, p, base, h, axis, fa, fb, fc):
    d1, d2, xi, chi = p[0], p[1], p[2], p[3]
    U, V, W = base
    pot = U * b + V * a + a * b
    lo = [slice(None)] * 2
    hi = [slice(None)] * 2
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)

    ga = (a[hi] - a[lo]) / h
    gb = (b[hi] - b[lo]) / h
    gc = (c[hi] - c[lo]) / h
    gp = (pot[hi] - pot[lo]) / h

    vel_v = xi * ga
    vel_w = chi * gp
    flux_a = -d1 * ga
    flux_b = vel_v * (V + np.where(vel_v > 0.0, b[lo], b[hi])) - d2 * gb
    flux_c = vel_w * (W + np.where(vel_w > 0.0, c[lo], c[hi])) - gc
    for f, flux in ((fa, flux_a), (fb, flux_b), (fc, flux_c)):
        f[lo] -= flux / h
        f[hi] += flux / h
    speed = max(float(np.max(np.abs(vel_v), initial=0.0)), float(np.max(np.abs(vel_w), initial=0.0)))
    return speed


def rhs(a, b, c, p, base, offsets, hx, hy, dim):
    """Return (fu, fv, fw, speed_x, speed_y, max_densities)."""
    a, b, c = (np.asarray(x, dtype=np.float64) for x in (a, b, c))
    r1, r2, r3, b1, b2, b3, sigma = p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    U, V, W = base
    cu, cv, cw = offsets
    u, v, w = U + a, V + b, W + c
    fa = u * (cu - r1 * a - b1 * b - b3 * c)
    fb = v * (cv - r2 * b + a - b2 * c)
    fc = w * (cw + r3 * _w_power_gap(sigma, W, c) + a + b)
    sx = _face_terms(a, b, c, p, (U, V, W), hx, 0, fa, fb, fc)
    sy = _face_terms(a, b, c, p, (U, V, W), hy, 1, fa, fb, fc) if dim == 2 else 0.0
    dens = (max(float(u.max()), 0.0), max(float(v.max()), 0.0), max(float(w.max()), 0.0))
    return fa, fb, fc, sx, sy, dens


def reaction_rate(p, dens):
    r1, r2, r3, b1, b2, b3, sigma = p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    U, V, W = dens
    ru = r1 * (1.0 + 2.0 * U) + b1 * V + b3 * W + (b1 + b3) * U
    rv = r2 * (1.0 + 2.0 * V) + U + b2 * W + (1.0 + b2) * V
    rw = r3 * (1.0 + (sigma + 1.0) * W**sigma) + U + V + 2.0 * W
    return max(ru, rv, rw)


def cfl_dt(p, hx, hy, dim, sx, sy, dens, safety, dt_max):
    # outflow rates add up in a cell, so the limits combine harmonically
    dmax = max(p[0], p[1], 1.0)
    inv = 1.0 / (hx * hx) + (1.0 / (hy * hy) if dim == 2 else 0.0)
    rate = 2.0 * dmax * inv + 2.0 * sx / hx + reaction_rate(p, dens)
    if dim == 2:
        rate += 2.0 * sy / hy
    return min(safety / rate, dt_max)


def _check(base, a, b, c):
    for species, (ref, x) in enumerate(zip(base, (a, b, c))):
        bad = ~np.isfinite(x)
        if bad.any():
            return NONFINITE, species, int(np.flatnonzero(bad.ravel())[0])
    for species, (ref, x) in enumerate(zip(base, (a, b, c))):
        neg = (ref + x) < 0.0
        if neg.any():
            return NEGATIVE, species, int(np.flatnonzero(neg.ravel())[0])
    return OK, -1, -1


def advance(a, b, c, p, base, offsets, hx, hy, dim, t, t_stop, max_steps, safety, dt_max, dt_fixed, method):
    # overflow surfaces as a NONFINITE status, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _advance(a, b, c, p, base, offsets, hx, hy, dim, t, t_stop, max_steps, safety, dt_max, dt_fixed, method)


def _advance(a, b, c, p, base, offsets, hx, hy, dim, t, t_stop, max_steps, safety, dt_max, dt_fixed, method):
    p = np.asarray(p, dtype=np.float64)
    base = tuple(float(x) for x in base)
    steps, status, species, where, dt = 0, OK, -1, -1, 0.0
    while t < t_stop and steps < max_steps:
        ka, kb, kc, sx, sy, dens = rhs(a, b, c, p, base, offsets, hx, hy, dim)
        dt = dt_fixed if dt_fixed > 0.0 else cfl_dt(p, hx, hy, dim, sx, sy, dens, safety, dt_max)
        remaining = t_stop - t
        if dt >= remaining * (1.0 - 1e-9):
            dt = remaining
        sa, sb, sc = a + dt * ka, b + dt * kb, c + dt * kc
        status, species, where = _check(base, sa, sb, sc)
        if status != OK:
            break
        if method == 1:
            qa, qb, qc, _, _, _ = rhs(sa, sb, sc, p, base, offsets, hx, hy, dim)
            sa = 0.5 * a + 0.5 * (sa + dt * qa)
            sb = 0.5 * b + 0.5 * (sb + dt * qb)
            sc = 0.5 * c + 0.5 * (sc + dt * qc)
            status, species, where = _check(base, sa, sb, sc)
            if status != OK:
                break
        a[...] = sa
        b[...] = sb
        c[...] = sc
        steps += 1
        t = t_stop if dt == remaining else t + dt
    return t, steps, status, species, where, dt
