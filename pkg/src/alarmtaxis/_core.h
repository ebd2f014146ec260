#ifndef ALARMTAXIS_CORE_H
#define ALARMTAXIS_CORE_H

#include <stddef.h>

enum { AT_OK = 0, AT_NEGATIVE = 1, AT_NONFINITE = 2 };

typedef struct {
    double d1, d2, xi, chi, r1, r2, r3, b1, b2, b3, sigma;
    /* base state and the reaction brackets evaluated there */
    double U, V, W, cu, cv, cw;
    double hx, hy;
    int dim;
    ptrdiff_t nx, ny;
} at_coeffs;

typedef struct {
    double t;
    long steps;
    int status;
    int species;
    ptrdiff_t where;
    double dt;
} at_result;

/* Doubles needed by the scratch buffer passed to at_rhs / at_advance. */
ptrdiff_t at_work_size(const at_coeffs *k);

void at_rhs(const at_coeffs *k, double *work,
            const double *a, const double *b, const double *c,
            double *fa, double *fb, double *fc,
            double *speed_x, double *speed_y, double dens[3]);

at_result at_advance(const at_coeffs *k, double *work,
                     double *a, double *b, double *c,
                     double t, double t_stop, long max_steps,
                     double safety, double dt_max, double dt_fixed, int method);

#endif
