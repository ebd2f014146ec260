# cython: language_level=3, boundscheck=False, wraparound=False
"""Cython binding for the C time-stepping core.

Arrays are C-contiguous ``(nx, ny)`` deviation fields; 1D problems pass
``ny == 1`` and ``dim == 1``. ``p`` holds the coefficients in the order
d1, d2, xi, chi, r1, r2, r3, b1, b2, b3, sigma.
"""

import numpy as np

cdef extern from "_core.h":
    ctypedef struct at_coeffs:
        double d1, d2, xi, chi, r1, r2, r3, b1, b2, b3, sigma
        double U, V, W, cu, cv, cw
        double hx, hy
        int dim
        Py_ssize_t nx, ny

    ctypedef struct at_result:
        double t
        long steps
        int status
        int species
        Py_ssize_t where
        double dt

    Py_ssize_t at_work_size(const at_coeffs *k) nogil
    void at_rhs(const at_coeffs *k, double *work,
                const double *a, const double *b, const double *c,
                double *fa, double *fb, double *fc,
                double *speed_x, double *speed_y, double *dens) nogil
    at_result at_advance(const at_coeffs *k, double *work,
                         double *a, double *b, double *c,
                         double t, double t_stop, long max_steps,
                         double safety, double dt_max, double dt_fixed, int method) nogil


cdef at_coeffs make_coeffs(double[::1] p, double[::1] base, double[::1] offsets,
                           double hx, double hy, int dim, Py_ssize_t nx, Py_ssize_t ny) except *:
    cdef at_coeffs k
    if p.shape[0] != 11 or base.shape[0] != 3 or offsets.shape[0] != 3:
        raise ValueError("expected 11 coefficients, a 3-entry base and 3 offsets")
    k.d1 = p[0]; k.d2 = p[1]; k.xi = p[2]; k.chi = p[3]
    k.r1 = p[4]; k.r2 = p[5]; k.r3 = p[6]
    k.b1 = p[7]; k.b2 = p[8]; k.b3 = p[9]; k.sigma = p[10]
    k.U = base[0]; k.V = base[1]; k.W = base[2]
    k.cu = offsets[0]; k.cv = offsets[1]; k.cw = offsets[2]
    k.hx = hx; k.hy = hy; k.dim = dim
    k.nx = nx; k.ny = ny
    return k


def rhs(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
        double[::1] p, double[::1] base, double[::1] offsets,
        double hx, double hy, int dim):
    """Return (fu, fv, fw, speed_x, speed_y, max_densities)."""
    cdef at_coeffs k = make_coeffs(p, base, offsets, hx, hy, dim, a.shape[0], a.shape[1])
    cdef double sx = 0.0, sy = 0.0
    cdef double dens[3]
    cdef double[::1] work = np.empty(at_work_size(&k))
    shape = (a.shape[0], a.shape[1])
    fa = np.empty(shape)
    fb = np.empty(shape)
    fc = np.empty(shape)
    cdef double[:, ::1] fa_v = fa, fb_v = fb, fc_v = fc
    with nogil:
        at_rhs(&k, &work[0], &a[0, 0], &b[0, 0], &c[0, 0],
               &fa_v[0, 0], &fb_v[0, 0], &fc_v[0, 0], &sx, &sy, dens)
    return fa, fb, fc, sx, sy, (dens[0], dens[1], dens[2])


def advance(double[:, ::1] a, double[:, ::1] b, double[:, ::1] c,
            double[::1] p, double[::1] base, double[::1] offsets,
            double hx, double hy, int dim,
            double t, double t_stop, long max_steps,
            double safety, double dt_max, double dt_fixed, int method):
    """Advance the deviation fields in place.

    Stops at ``t_stop`` (landing on it exactly) or after ``max_steps``.
    ``method`` is 0 for explicit Euler, 1 for two-stage SSP Runge-Kutta.
    ``dt_fixed > 0`` bypasses the CFL estimate. On failure the input arrays
    hold the last valid state. Returns
    ``(t, steps, status, species, flat_index, dt_last)``.
    """
    cdef at_coeffs k = make_coeffs(p, base, offsets, hx, hy, dim, a.shape[0], a.shape[1])
    if b.shape[0] != a.shape[0] or c.shape[0] != a.shape[0] or b.shape[1] != a.shape[1] or c.shape[1] != a.shape[1]:
        raise ValueError("u, v, w deviation arrays must share one shape")
    cdef double[::1] work = np.empty(at_work_size(&k))
    cdef at_result res
    with nogil:
        res = at_advance(&k, &work[0], &a[0, 0], &b[0, 0], &c[0, 0],
                         t, t_stop, max_steps, safety, dt_max, dt_fixed, method)
    return res.t, res.steps, res.status, res.species, res.where, res.dt
