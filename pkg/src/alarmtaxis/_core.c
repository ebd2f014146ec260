/* Fused right-hand side and explicit time loop for the alarm-taxis system.
 *
 * Fields are row-major (nx, ny) deviation arrays about the base state
 * (U, V, W); 1D problems use ny == 1 and dim == 1.  Face arrays are padded
 * with zero boundary faces so the divergence loops carry no branches.
 */
#include <math.h>
#include <string.h>

#include "_core.h"

#define RESTRICT __restrict__

typedef struct {
    double *pot;
    double *gx[3];
    double *gy[3];
    double *k[3];
    double *buf[2][3];
} layout;

ptrdiff_t at_work_size(const at_coeffs *k)
{
    ptrdiff_t n = k->nx * k->ny;
    return n + 3 * (n + k->ny) + 3 * k->nx * (k->ny + 1) + 3 * n + 6 * n;
}

static layout split(const at_coeffs *k, double *work)
{
    layout L;
    ptrdiff_t n = k->nx * k->ny, gx = n + k->ny, gy = k->nx * (k->ny + 1);
    double *p = work;
    L.pot = p;
    p += n;
    for (int s = 0; s < 3; s++, p += gx)
        L.gx[s] = p;
    for (int s = 0; s < 3; s++, p += gy)
        L.gy[s] = p;
    for (int s = 0; s < 3; s++, p += n)
        L.k[s] = p;
    for (int q = 0; q < 2; q++)
        for (int s = 0; s < 3; s++, p += n)
            L.buf[q][s] = p;
    return L;
}

static void reactions(const at_coeffs *k, ptrdiff_t n,
                      const double *RESTRICT a, const double *RESTRICT b, const double *RESTRICT c,
                      double *RESTRICT fa, double *RESTRICT fb, double *RESTRICT fc,
                      double *RESTRICT pot)
{
    const double U = k->U, V = k->V, W = k->W, cu = k->cu, cv = k->cv, cw = k->cw;
    const double r1 = k->r1, r2 = k->r2, r3 = k->r3, b1 = k->b1, b2 = k->b2, b3 = k->b3;
    const double sigma = k->sigma, Wsig = pow(W, sigma);

    if (sigma == 2.0) {
        for (ptrdiff_t i = 0; i < n; i++) {
            double da = a[i], db = b[i], dc = c[i];
            /* W^2 - (W + dc)^2 */
            double gap = -dc * (2.0 * W + dc);
            pot[i] = U * db + V * da + da * db;
            fa[i] = (U + da) * (cu - r1 * da - b1 * db - b3 * dc);
            fb[i] = (V + db) * (cv - r2 * db + da - b2 * dc);
            fc[i] = (W + dc) * (cw + r3 * gap + da + db);
        }
        return;
    }
    for (ptrdiff_t i = 0; i < n; i++) {
        double da = a[i], db = b[i], dc = c[i], gap;
        /* W^sigma - (W + dc)^sigma, free of cancellation for small dc */
        if (W > 0.0)
            gap = -Wsig * expm1(sigma * log1p(dc / W));
        else
            gap = (dc > 0.0) ? -pow(dc, sigma) : 0.0;
        pot[i] = U * db + V * da + da * db;
        fa[i] = (U + da) * (cu - r1 * da - b1 * db - b3 * dc);
        fb[i] = (V + db) * (cv - r2 * db + da - b2 * dc);
        fc[i] = (W + dc) * (cw + r3 * gap + da + db);
    }
}

/* Faces i -> i + stride for i in [0, count); values stored at out[i + stride]
 * are added to the lower cell and subtracted from the upper one. */
static void faces(const at_coeffs *k, ptrdiff_t count, ptrdiff_t stride, double ih,
                  const double *RESTRICT a, const double *RESTRICT b, const double *RESTRICT c,
                  const double *RESTRICT pot,
                  double *RESTRICT oa, double *RESTRICT ob, double *RESTRICT oc)
{
    const double xi = k->xi, chi = k->chi, d1 = k->d1, d2 = k->d2, V = k->V, W = k->W;
    for (ptrdiff_t i = 0; i < count; i++) {
        ptrdiff_t j = i + stride;
        double bl = b[i], br = b[j], cl = c[i], cr = c[j];
        double ga = (a[j] - a[i]) * ih;
        double gb = (br - bl) * ih;
        double gc = (cr - cl) * ih;
        double gp = (pot[j] - pot[i]) * ih;
        double vv = xi * ga, vw = chi * gp;
        double bup = vv > 0.0 ? bl : br;
        double cup = vw > 0.0 ? cl : cr;
        oa[j] = d1 * ga * ih;
        ob[j] = (d2 * gb - vv * (V + bup)) * ih;
        oc[j] = (gc - vw * (W + cup)) * ih;
    }
}

static double face_speed(const at_coeffs *k, ptrdiff_t count, ptrdiff_t stride, double ih,
                         const double *RESTRICT a, const double *RESTRICT pot)
{
    const double xi = k->xi * ih, chi = k->chi * ih;
    double s = 0.0;
#pragma omp simd reduction(max : s)
    for (ptrdiff_t i = 0; i < count; i++) {
        double vv = fabs(xi * (a[i + stride] - a[i]));
        double vw = fabs(chi * (pot[i + stride] - pot[i]));
        double m = vv > vw ? vv : vw;
        s = m > s ? m : s;
    }
    return s;
}

static void divergence(ptrdiff_t n, ptrdiff_t stride, const double *RESTRICT g, double *RESTRICT f)
{
    for (ptrdiff_t i = 0; i < n; i++)
        f[i] += g[i + stride] - g[i];
}

static void evaluate(const at_coeffs *k, const layout *L,
                     const double *a, const double *b, const double *c,
                     double *fa, double *fb, double *fc,
                     int want_speed, double *speed_x, double *speed_y, double dens[3])
{
    const ptrdiff_t nx = k->nx, ny = k->ny, n = nx * ny;
    const double ihx = 1.0 / k->hx;
    double *f[3] = {fa, fb, fc};

    reactions(k, n, a, b, c, fa, fb, fc, L->pot);

    faces(k, n - ny, ny, ihx, a, b, c, L->pot, L->gx[0], L->gx[1], L->gx[2]);
    for (int s = 0; s < 3; s++)
        divergence(n, ny, L->gx[s], f[s]);

    if (k->dim == 2) {
        const double ihy = 1.0 / k->hy;
        for (ptrdiff_t r = 0; r < nx; r++) {
            ptrdiff_t off = r * ny, row = r * (ny + 1);
            faces(k, ny - 1, 1, ihy, a + off, b + off, c + off, L->pot + off,
                  L->gy[0] + row, L->gy[1] + row, L->gy[2] + row);
            for (int s = 0; s < 3; s++)
                divergence(ny, 1, L->gy[s] + row, f[s] + off);
        }
    }

    if (!want_speed)
        return;
    *speed_x = face_speed(k, n - ny, ny, ihx, a, L->pot);
    *speed_y = 0.0;
    if (k->dim == 2) {
        const double ihy = 1.0 / k->hy;
        for (ptrdiff_t r = 0; r < nx; r++) {
            double s = face_speed(k, ny - 1, 1, ihy, a + r * ny, L->pot + r * ny);
            *speed_y = s > *speed_y ? s : *speed_y;
        }
    }
    double am = -INFINITY, bm = -INFINITY, cm = -INFINITY;
#pragma omp simd reduction(max : am, bm, cm)
    for (ptrdiff_t i = 0; i < n; i++) {
        am = a[i] > am ? a[i] : am;
        bm = b[i] > bm ? b[i] : bm;
        cm = c[i] > cm ? c[i] : cm;
    }
    dens[0] = fmax(k->U + am, 0.0);
    dens[1] = fmax(k->V + bm, 0.0);
    dens[2] = fmax(k->W + cm, 0.0);
}

void at_rhs(const at_coeffs *k, double *work,
            const double *a, const double *b, const double *c,
            double *fa, double *fb, double *fc,
            double *speed_x, double *speed_y, double dens[3])
{
    layout L = split(k, work);
    memset(work, 0, (size_t)at_work_size(k) * sizeof(double));
    evaluate(k, &L, a, b, c, fa, fb, fc, 1, speed_x, speed_y, dens);
}

static double reaction_rate(const at_coeffs *k, const double dens[3])
{
    double U = dens[0], V = dens[1], W = dens[2];
    double ru = k->r1 * (1.0 + 2.0 * U) + k->b1 * V + k->b3 * W + (k->b1 + k->b3) * U;
    double rv = k->r2 * (1.0 + 2.0 * V) + U + k->b2 * W + (1.0 + k->b2) * V;
    double rw = k->r3 * (1.0 + (k->sigma + 1.0) * pow(W, k->sigma)) + U + V + 2.0 * W;
    double r = ru > rv ? ru : rv;
    return r > rw ? r : rw;
}

/* The diffusive, advective (both faces of a cell) and reaction outflow
 * rates add up in the positivity condition of an Euler stage, so the
 * step is safety over their sum. */
static double cfl_dt(const at_coeffs *k, double sx, double sy, const double dens[3],
                     double safety, double dt_max)
{
    double dmax = k->d1 > k->d2 ? k->d1 : k->d2;
    double inv = 1.0 / (k->hx * k->hx);
    if (dmax < 1.0)
        dmax = 1.0;
    if (k->dim == 2)
        inv += 1.0 / (k->hy * k->hy);
    double rate = 2.0 * dmax * inv + 2.0 * sx / k->hx + reaction_rate(k, dens);
    if (k->dim == 2)
        rate += 2.0 * sy / k->hy;
    double dt = safety / rate;
    return dt < dt_max ? dt : dt_max;
}

static int check(const at_coeffs *k, ptrdiff_t n, double *const x[3], int *species, ptrdiff_t *where)
{
    const double base[3] = {k->U, k->V, k->W};
    for (int s = 0; s < 3; s++) {
        int bad = 0;
        for (ptrdiff_t i = 0; i < n; i++)
            bad |= !isfinite(x[s][i]) | (base[s] + x[s][i] < 0.0);
        if (!bad)
            continue;
        for (ptrdiff_t i = 0; i < n; i++) {
            if (!isfinite(x[s][i])) {
                *species = s;
                *where = i;
                return AT_NONFINITE;
            }
        }
        for (ptrdiff_t i = 0; i < n; i++) {
            if (base[s] + x[s][i] < 0.0) {
                *species = s;
                *where = i;
                return AT_NEGATIVE;
            }
        }
    }
    return AT_OK;
}

static void axpy(ptrdiff_t n, double dt, const double *RESTRICT x, const double *RESTRICT f,
                 double *RESTRICT out)
{
    for (ptrdiff_t i = 0; i < n; i++)
        out[i] = x[i] + dt * f[i];
}

static void heun_average(ptrdiff_t n, double dt, const double *RESTRICT x, const double *RESTRICT f,
                         double *RESTRICT stage)
{
    for (ptrdiff_t i = 0; i < n; i++)
        stage[i] = 0.5 * x[i] + 0.5 * (stage[i] + dt * f[i]);
}

at_result at_advance(const at_coeffs *k, double *work,
                     double *a, double *b, double *c,
                     double t, double t_stop, long max_steps,
                     double safety, double dt_max, double dt_fixed, int method)
{
    const ptrdiff_t n = k->nx * k->ny;
    const int adaptive = !(dt_fixed > 0.0);
    layout L = split(k, work);
    double *user[3] = {a, b, c};
    double *x[3] = {a, b, c};
    double sx = 0.0, sy = 0.0, dens[3] = {0.0, 0.0, 0.0};
    int free_buf = 0;
    at_result res = {t, 0, AT_OK, -1, -1, 0.0};

    memset(work, 0, (size_t)at_work_size(k) * sizeof(double));

    while (res.t < t_stop && res.steps < max_steps) {
        double dt, remaining;
        double **s = L.buf[free_buf];

        evaluate(k, &L, x[0], x[1], x[2], L.k[0], L.k[1], L.k[2], adaptive, &sx, &sy, dens);
        dt = adaptive ? cfl_dt(k, sx, sy, dens, safety, dt_max) : dt_fixed;
        remaining = t_stop - res.t;
        if (dt >= remaining * (1.0 - 1e-9))
            dt = remaining;
        res.dt = dt;

        for (int q = 0; q < 3; q++)
            axpy(n, dt, x[q], L.k[q], s[q]);
        res.status = check(k, n, s, &res.species, &res.where);
        if (res.status != AT_OK)
            break;

        if (method == 1) {
            evaluate(k, &L, s[0], s[1], s[2], L.k[0], L.k[1], L.k[2], 0, &sx, &sy, dens);
            for (int q = 0; q < 3; q++)
                heun_average(n, dt, x[q], L.k[q], s[q]);
            res.status = check(k, n, s, &res.species, &res.where);
            if (res.status != AT_OK)
                break;
        }

        /* new state lives in s; the other buffer is free for the next step */
        for (int q = 0; q < 3; q++)
            x[q] = s[q];
        free_buf = 1 - free_buf;
        res.steps++;
        res.t = (dt == remaining) ? t_stop : res.t + dt;
    }

    if (x[0] != user[0])
        for (int q = 0; q < 3; q++)
            memcpy(user[q], x[q], (size_t)n * sizeof(double));
    return res;
}
