# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled implementation of the density hot loops.

Function contracts, argument conventions, and numeric semantics (underflow
cutoff, monomial recurrence, contraction of fixed conditioning coordinates)
are documented in ``reference.py``; the two modules must stay interchangeable.

Coefficient builds run in two phases: tight C loops produce the exponent
arguments for a block of centers, one vectorized ``np.exp`` call evaluates
them (several times faster than per-element libm calls), and a second C pass
accumulates the weighted monomials.  The two-dimensional case, which carries
the entire grid workload, uses per-axis power tables over a square scratch
block, with fully unrolled variants for order 4 (the default order; constant
trip counts let the compiler vectorize).  The scatter into the coefficient
row relies on the graded-lex layout, where the pair (a, b) sits at flat
index g*(g+1)/2 + b with g = a + b.
"""

from libc.math cimport exp, pow

import numpy as np

cdef double UNDERFLOW_Q = 1490.0
cdef double TWO_PI = 6.283185307179586476925286766559
cdef double INV3 = 1.0 / 3.0
cdef Py_ssize_t CENTER_BLOCK = 32


def kernel_sum(double[:, ::1] points, double[::1] weights,
               double[:, ::1] probes, double sigma):
    """Reference quadratic path: one libm exp per (probe, point) pair."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t m = probes.shape[0]
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double q, diff, acc
    cdef double inv_sigma = 1.0 / sigma
    for j in range(m):
        acc = 0.0
        for i in range(n):
            q = 0.0
            for k in range(d):
                diff = (probes[j, k] - points[i, k]) * inv_sigma
                q += diff * diff
            if q < UNDERFLOW_Q:
                acc += weights[i] * exp(-0.5 * q)
        out[j] = acc
    return out_arr


cdef void _diff_args_2d(double[:, ::1] points, double[:, ::1] centers,
                        Py_ssize_t c0, Py_ssize_t cc, double inv_sigma,
                        double[:, ::1] ux, double[:, ::1] uy,
                        double[:, ::1] arg) noexcept:
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t c, i
    cdef double dx, dy, q
    for c in range(cc):
        for i in range(n):
            dx = (points[i, 0] - centers[c0 + c, 0]) * inv_sigma
            dy = (points[i, 1] - centers[c0 + c, 1]) * inv_sigma
            q = dx * dx + dy * dy
            ux[c, i] = dx
            uy[c, i] = dy
            # exp(-1e9) flushes to exactly 0.0, matching the underflow skip
            arg[c, i] = -0.5 * q if q < UNDERFLOW_Q else -1e9


cdef void _scatter_tri(double* scratch, Py_ssize_t pp,
                       double[:, ::1] out, Py_ssize_t row, double scale) noexcept:
    cdef Py_ssize_t a, b, g
    for a in range(pp):
        for b in range(pp - a):
            g = a + b
            out[row, (g * (g + 1)) // 2 + b] = scale * scratch[a * pp + b]


cdef void _accum_2d(double[:, ::1] e, double[::1] weights,
                    double[:, ::1] ux, double[:, ::1] uy,
                    Py_ssize_t pp, double[::1] px, double[::1] py,
                    double[::1] scratch, double[:, ::1] out,
                    Py_ssize_t c0, Py_ssize_t cc) noexcept:
    cdef Py_ssize_t n = e.shape[1]
    cdef Py_ssize_t c, i, a, b
    cdef double we, wa, vx, vy
    for c in range(cc):
        for a in range(pp * pp):
            scratch[a] = 0.0
        for i in range(n):
            we = weights[i] * e[c, i]
            if we == 0.0:
                continue
            vx = ux[c, i]
            vy = uy[c, i]
            px[0] = 1.0
            py[0] = 1.0
            for a in range(1, pp):
                px[a] = px[a - 1] * vx
                py[a] = py[a - 1] * vy
            for a in range(pp):
                wa = we * px[a]
                for b in range(pp):
                    scratch[a * pp + b] += wa * py[b]
        _scatter_tri(&scratch[0], pp, out, c0 + c, 1.0)


cdef void _accum_2d_p4(double[:, ::1] e, double[::1] weights,
                       double[:, ::1] ux, double[:, ::1] uy,
                       double[:, ::1] out, Py_ssize_t c0, Py_ssize_t cc) noexcept:
    cdef Py_ssize_t n = e.shape[1]
    cdef Py_ssize_t c, i
    cdef double we, vx, vy, w0, w1, w2, w3, w4
    cdef double p1, p2, p3, p4, q1, q2, q3, q4
    cdef double s[25]
    for c in range(cc):
        for i in range(25):
            s[i] = 0.0
        for i in range(n):
            we = weights[i] * e[c, i]
            if we == 0.0:
                continue
            vx = ux[c, i]
            vy = uy[c, i]
            p1 = vx; p2 = p1 * vx; p3 = p2 * vx; p4 = p3 * vx
            q1 = vy; q2 = q1 * vy; q3 = q2 * vy; q4 = q3 * vy
            w0 = we
            s[0] += w0; s[1] += w0 * q1; s[2] += w0 * q2; s[3] += w0 * q3; s[4] += w0 * q4
            w1 = we * p1
            s[5] += w1; s[6] += w1 * q1; s[7] += w1 * q2; s[8] += w1 * q3
            w2 = we * p2
            s[10] += w2; s[11] += w2 * q1; s[12] += w2 * q2
            w3 = we * p3
            s[15] += w3; s[16] += w3 * q1
            w4 = we * p4
            s[20] += w4
        _scatter_tri(s, 5, out, c0 + c, 1.0)


cdef void _diff_args_nd(double[:, ::1] points, double[:, ::1] centers,
                        Py_ssize_t c0, Py_ssize_t cc, double inv_sigma,
                        double[:, :, ::1] u, double[:, ::1] arg) noexcept:
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t c, i, k
    cdef double diff, q
    for c in range(cc):
        for i in range(n):
            q = 0.0
            for k in range(d):
                diff = (points[i, k] - centers[c0 + c, k]) * inv_sigma
                u[c, i, k] = diff
                q += diff * diff
            arg[c, i] = -0.5 * q if q < UNDERFLOW_Q else -1e9


cdef void _accum_nd(double[:, ::1] e, double[::1] weights,
                    double[:, :, ::1] u, int[::1] parents, int[::1] pdims,
                    double[::1] mono, double[:, ::1] out,
                    Py_ssize_t c0, Py_ssize_t cc) noexcept:
    cdef Py_ssize_t n = e.shape[1]
    cdef Py_ssize_t nb = parents.shape[0]
    cdef Py_ssize_t c, i, b
    cdef double we
    for c in range(cc):
        for i in range(n):
            we = weights[i] * e[c, i]
            if we == 0.0:
                continue
            mono[0] = 1.0
            out[c0 + c, 0] += we
            for b in range(1, nb):
                mono[b] = mono[parents[b]] * u[c, i, pdims[b]]
                out[c0 + c, b] += we * mono[b]


def _coeffs_2d(double[:, ::1] points, double[::1] weights,
               double[:, ::1] centers, double inv_sigma, Py_ssize_t order,
               double[:, ::1] out, arg_arr):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t nc = centers.shape[0]
    cdef Py_ssize_t pp = order + 1
    ux_arr = np.empty((CENTER_BLOCK, n))
    uy_arr = np.empty((CENTER_BLOCK, n))
    buf_arr = np.empty(2 * pp + pp * pp)
    cdef double[:, ::1] ux = ux_arr
    cdef double[:, ::1] uy = uy_arr
    cdef double[::1] buf = buf_arr
    cdef double[:, ::1] arg = arg_arr
    cdef Py_ssize_t c0, cc
    for c0 in range(0, nc, CENTER_BLOCK):
        cc = min(CENTER_BLOCK, nc - c0)
        _diff_args_2d(points, centers, c0, cc, inv_sigma, ux, uy, arg)
        np.exp(arg_arr[:cc], out=arg_arr[:cc])
        if pp == 5:
            _accum_2d_p4(arg, weights, ux, uy, out, c0, cc)
        else:
            _accum_2d(arg, weights, ux, uy, pp,
                      buf[:pp], buf[pp : 2 * pp], buf[2 * pp :], out, c0, cc)


def _coeffs_nd(double[:, ::1] points, double[::1] weights,
               double[:, ::1] centers, double inv_sigma,
               int[::1] parents, int[::1] pdims,
               double[:, ::1] out, arg_arr):
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t nc = centers.shape[0]
    cdef Py_ssize_t nb = parents.shape[0]
    u_arr = np.empty((CENTER_BLOCK, n, d))
    mono_arr = np.empty(nb)
    cdef double[:, :, ::1] u = u_arr
    cdef double[::1] mono = mono_arr
    cdef double[:, ::1] arg = arg_arr
    cdef Py_ssize_t c0, cc
    for c0 in range(0, nc, CENTER_BLOCK):
        cc = min(CENTER_BLOCK, nc - c0)
        _diff_args_nd(points, centers, c0, cc, inv_sigma, u, arg)
        np.exp(arg_arr[:cc], out=arg_arr[:cc])
        _accum_nd(arg, weights, u, parents, pdims, mono, out, c0, cc)


def expansion_coefficients(double[:, ::1] points, double[::1] weights,
                           double[:, ::1] centers, double sigma,
                           int[::1] parents, int[::1] pdims):
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t nc = centers.shape[0]
    cdef Py_ssize_t nb = parents.shape[0]
    out_arr = np.zeros((nc, nb))
    cdef double[:, ::1] out = out_arr
    cdef double inv_sigma = 1.0 / sigma
    cdef Py_ssize_t order
    arg_arr = np.empty((CENTER_BLOCK, points.shape[0]))

    if d == 2:
        # a full 2-D graded basis has nb = (order+1)(order+2)/2 entries
        order = 0
        while (order + 1) * (order + 2) // 2 < nb:
            order += 1
        if (order + 1) * (order + 2) // 2 != nb:
            raise ValueError("coefficient table is not a full 2-D graded basis")
        _coeffs_2d(points, weights, centers, inv_sigma, order, out, arg_arr)
    else:
        _coeffs_nd(points, weights, centers, inv_sigma, parents, pdims, out, arg_arr)
    return out_arr


cdef double _series_p4(double* cs, double[::1] invfact,
                       double p1, double q1) noexcept:
    cdef double p2 = p1 * p1, p3 = p1 * p1 * p1, p4 = (p1 * p1) * (p1 * p1)
    cdef double q2 = q1 * q1, q3 = q1 * q1 * q1, q4 = (q1 * q1) * (q1 * q1)
    cdef double acc = cs[0]
    acc += invfact[1] * p1 * cs[1] + invfact[2] * q1 * cs[2]
    acc += invfact[3] * p2 * cs[3] + invfact[4] * (p1 * q1) * cs[4] + invfact[5] * q2 * cs[5]
    acc += invfact[6] * p3 * cs[6] + invfact[7] * (p2 * q1) * cs[7]
    acc += invfact[8] * (p1 * q2) * cs[8] + invfact[9] * q3 * cs[9]
    acc += invfact[10] * p4 * cs[10] + invfact[11] * (p3 * q1) * cs[11]
    acc += invfact[12] * (p2 * q2) * cs[12] + invfact[13] * (p1 * q3) * cs[13]
    acc += invfact[14] * q4 * cs[14]
    return acc


def expansion_values(double[:, ::1] coeffs, double[:, ::1] centers,
                     Py_ssize_t[::1] slots, double[:, ::1] probes,
                     double sigma, double[::1] invfact,
                     int[::1] parents, int[::1] pdims, double norm_const):
    cdef Py_ssize_t m = probes.shape[0]
    cdef Py_ssize_t d = probes.shape[1]
    cdef Py_ssize_t nb = parents.shape[0]
    cdef Py_ssize_t nc = coeffs.shape[0]
    out_arr = np.empty(m)
    cdef double[::1] out = out_arr
    u_arr = np.empty(d)
    mono_arr = np.empty(nb)
    cdef double[::1] u = u_arr
    cdef double[::1] mono = mono_arr
    cdef Py_ssize_t j, jj, k, b, sl
    cdef double q, pref, series, val, dx, dy
    cdef double inv_sigma = 1.0 / sigma
    cdef bint fast = (d == 2 and nb == 15)
    # visit probes grouped by expansion row (counting sort) so each
    # coefficient row stays cache-resident across its probes
    order_arr = np.empty(m, dtype=np.intp)
    count_arr = np.zeros(nc + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] order = order_arr
    cdef Py_ssize_t[::1] count = count_arr
    for j in range(m):
        count[slots[j] + 1] += 1
    for j in range(nc):
        count[j + 1] += count[j]
    for j in range(m):
        order[count[slots[j]]] = j
        count[slots[j]] += 1
    for jj in range(m):
        j = order[jj]
        sl = slots[j]
        if fast:
            dx = (probes[j, 0] - centers[sl, 0]) * inv_sigma
            dy = (probes[j, 1] - centers[sl, 1]) * inv_sigma
            q = dx * dx + dy * dy
            if q >= UNDERFLOW_Q:
                out[j] = 0.0
                continue
            series = _series_p4(&coeffs[sl, 0], invfact, dx, dy)
        else:
            q = 0.0
            for k in range(d):
                u[k] = (probes[j, k] - centers[sl, k]) * inv_sigma
                q += u[k] * u[k]
            if q >= UNDERFLOW_Q:
                out[j] = 0.0
                continue
            mono[0] = 1.0
            series = coeffs[sl, 0]
            for b in range(1, nb):
                mono[b] = mono[parents[b]] * u[pdims[b]]
                series += invfact[b] * mono[b] * coeffs[sl, b]
        pref = norm_const * exp(-0.5 * q)
        val = pref * series
        out[j] = val if val > 0.0 else 0.0
    return out_arr


cdef void _diff_args_cond(double[:, ::1] points, double[:, ::1] centers,
                          Py_ssize_t c0, Py_ssize_t cc, double[::1] y_obs,
                          double inv_sigma,
                          double[:, ::1] ux, double[:, ::1] uy,
                          double[:, ::1] s, double[:, ::1] arg,
                          double[::1] uy_c) noexcept:
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t dj = points.shape[1]
    cdef Py_ssize_t dy = y_obs.shape[0]
    cdef Py_ssize_t dz = dj - dy
    cdef Py_ssize_t c, i, k
    cdef double dx, dyv, q, vk, sv
    for c in range(cc):
        for k in range(dy):
            uy_c[k] = (y_obs[k] - centers[c0 + c, dz + k]) * inv_sigma
        for i in range(n):
            dx = (points[i, 0] - centers[c0 + c, 0]) * inv_sigma
            dyv = (points[i, 1] - centers[c0 + c, 1]) * inv_sigma
            q = dx * dx + dyv * dyv
            sv = 0.0
            for k in range(dy):
                vk = (points[i, dz + k] - centers[c0 + c, dz + k]) * inv_sigma
                q += vk * vk
                sv += vk * uy_c[k]
            ux[c, i] = dx
            uy[c, i] = dyv
            s[c, i] = sv
            arg[c, i] = -0.5 * q if q < UNDERFLOW_Q else -1e9


cdef void _accum_cond(double[:, ::1] e, double[::1] weights,
                      double[:, ::1] ux, double[:, ::1] uy,
                      double[:, ::1] s, Py_ssize_t pp,
                      double[::1] px, double[::1] py, double[::1] t,
                      double[::1] scratch, double[:, ::1] out,
                      double[::1] prefix, Py_ssize_t c0, Py_ssize_t cc) noexcept:
    cdef Py_ssize_t n = e.shape[1]
    cdef Py_ssize_t order = pp - 1
    cdef Py_ssize_t c, i, a, b, k
    cdef double we, wa, vx, vy, sv, term
    for c in range(cc):
        if prefix[c0 + c] == 0.0:
            continue
        for a in range(pp * pp):
            scratch[a] = 0.0
        for i in range(n):
            we = weights[i] * e[c, i]
            if we == 0.0:
                continue
            vx = ux[c, i]
            vy = uy[c, i]
            sv = s[c, i]
            # t[k] = sum_{j<=k} sv^j / j!
            t[0] = 1.0
            term = 1.0
            for k in range(1, pp):
                term *= sv / k
                t[k] = t[k - 1] + term
            px[0] = 1.0
            py[0] = 1.0
            for a in range(1, pp):
                px[a] = px[a - 1] * vx
                py[a] = py[a - 1] * vy
            for a in range(pp):
                wa = we * px[a]
                for b in range(pp - a):
                    scratch[a * pp + b] += wa * py[b] * t[order - a - b]
        _scatter_tri(&scratch[0], pp, out, c0 + c, prefix[c0 + c])


cdef void _accum_cond_p4(double[:, ::1] e, double[::1] weights,
                         double[:, ::1] ux, double[:, ::1] uy,
                         double[:, ::1] s, double[:, ::1] out,
                         double[::1] prefix, Py_ssize_t c0, Py_ssize_t cc) noexcept:
    cdef Py_ssize_t n = e.shape[1]
    cdef Py_ssize_t c, i
    cdef double we, vx, vy, sv, term, w0, w1, w2, w3, w4
    cdef double p1, p2, p3, p4, q1, q2, q3, q4
    cdef double t0, t1, t2, t3, t4
    cdef double e13, e22, e31, e12, e21, e11
    cdef double acc[25]
    for c in range(cc):
        if prefix[c0 + c] == 0.0:
            continue
        for i in range(25):
            acc[i] = 0.0
        for i in range(n):
            we = weights[i] * e[c, i]
            if we == 0.0:
                continue
            vx = ux[c, i]
            vy = uy[c, i]
            sv = s[c, i]
            t0 = 1.0
            term = sv
            t1 = t0 + term
            term *= sv * 0.5
            t2 = t1 + term
            term *= sv * INV3
            t3 = t2 + term
            term *= sv * 0.25
            t4 = t3 + term
            p1 = vx; p2 = p1 * vx; p3 = p2 * vx; p4 = p3 * vx
            q1 = vy; q2 = q1 * vy; q3 = q2 * vy; q4 = q3 * vy
            e13 = q1 * t3; e22 = q2 * t2; e31 = q3 * t1
            e12 = q1 * t2; e21 = q2 * t1; e11 = q1 * t1
            w0 = we
            acc[0] += w0 * t4; acc[1] += w0 * e13; acc[2] += w0 * e22
            acc[3] += w0 * e31; acc[4] += w0 * q4
            w1 = we * p1
            acc[5] += w1 * t3; acc[6] += w1 * e12; acc[7] += w1 * e21; acc[8] += w1 * q3
            w2 = we * p2
            acc[10] += w2 * t2; acc[11] += w2 * e11; acc[12] += w2 * q2
            w3 = we * p3
            acc[15] += w3 * t1; acc[16] += w3 * q1
            w4 = we * p4
            acc[20] += w4
        _scatter_tri(acc, 5, out, c0 + c, prefix[c0 + c])


def conditional_coefficients(double[:, ::1] points, double[::1] weights,
                             double[:, ::1] centers, double[::1] y_obs,
                             double sigma, int order,
                             int[::1] z_parents, int[::1] z_pdims,
                             int[::1] z_degrees):
    """Contracted coefficients; the free block is always two-dimensional."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t dj = points.shape[1]
    cdef Py_ssize_t dy = y_obs.shape[0]
    cdef Py_ssize_t dz = dj - dy
    cdef Py_ssize_t nc = centers.shape[0]
    cdef Py_ssize_t nb = z_parents.shape[0]
    cdef Py_ssize_t pp = order + 1
    out_arr = np.zeros((nc, nb))
    cdef double[:, ::1] out = out_arr

    # per-center fixed factor exp(-||y_obs - c_y||^2 / (2 s^2)) * (2 pi)^(-dj/2)
    prefix_arr = np.empty(nc)
    cdef double[::1] prefix = prefix_arr
    cdef double inv_sigma = 1.0 / sigma
    cdef double norm = pow(TWO_PI, -0.5 * dj)
    cdef Py_ssize_t c, k
    cdef double qy, uyk
    for c in range(nc):
        qy = 0.0
        for k in range(dy):
            uyk = (y_obs[k] - centers[c, dz + k]) * inv_sigma
            qy += uyk * uyk
        prefix[c] = exp(-0.5 * qy) * norm if qy < UNDERFLOW_Q else 0.0

    ux_arr = np.empty((CENTER_BLOCK, n))
    uy_arr = np.empty((CENTER_BLOCK, n))
    s_arr = np.empty((CENTER_BLOCK, n))
    arg_arr = np.empty((CENTER_BLOCK, n))
    buf_arr = np.empty(3 * pp + pp * pp)
    uyc_arr = np.empty(dy)
    cdef double[:, ::1] ux = ux_arr
    cdef double[:, ::1] uy = uy_arr
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] arg = arg_arr
    cdef double[::1] buf = buf_arr
    cdef double[::1] uyc = uyc_arr
    cdef Py_ssize_t c0, cc
    for c0 in range(0, nc, CENTER_BLOCK):
        cc = min(CENTER_BLOCK, nc - c0)
        _diff_args_cond(points, centers, c0, cc, y_obs, inv_sigma, ux, uy, s, arg, uyc)
        np.exp(arg_arr[:cc], out=arg_arr[:cc])
        if pp == 5:
            _accum_cond_p4(arg, weights, ux, uy, s, out, prefix, c0, cc)
        else:
            _accum_cond(arg, weights, ux, uy, s, pp,
                        buf[:pp], buf[pp : 2 * pp], buf[2 * pp : 3 * pp],
                        buf[3 * pp :], out, prefix, c0, cc)
    return out_arr
