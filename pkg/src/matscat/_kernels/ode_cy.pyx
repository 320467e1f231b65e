# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) kernel for the phase-factored Jost system.

Same algorithm as ``ode_py`` (envelope equation g'' = Q g - 2 i sigma g',
checkpoint landings, FSAL), but each batch element steps with its own
adaptive step size, and the whole integration runs without the GIL so the
pipeline can fan batches out over threads.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

ctypedef double complex cplx

cdef double C2 = 0.2, C3 = 0.3, C4 = 0.8, C5 = 8.0 / 9.0
cdef double A21 = 0.2
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0
cdef double A63 = 46732.0 / 5247.0, A64 = 49.0 / 176.0
cdef double A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0, B3 = 500.0 / 1113.0, B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0, B6 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0

cdef double SAFETY = 0.9, MIN_FACTOR = 0.2, MAX_FACTOR = 5.0


cdef int find_interval(const double* breaks, int m, double x) noexcept nogil:
    cdef int lo = 0, hi = m - 1, mid
    if x < breaks[0] or x > breaks[m - 1]:
        return -1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if x >= breaks[mid]:
            lo = mid
        else:
            hi = mid
    return lo


cdef void eval_q(const double* breaks, int m, const cplx* coeffs, int n,
                 double x, cplx* q) noexcept nogil:
    cdef int nn = n * n
    cdef int idx = find_interval(breaks, m, x)
    cdef int e, seg = m - 1
    cdef double dx
    cdef cplx acc
    if idx < 0:
        for e in range(nn):
            q[e] = 0
        return
    dx = x - breaks[idx]
    for e in range(nn):
        acc = coeffs[idx * nn + e]
        acc = acc * dx + coeffs[(seg + idx) * nn + e]
        acc = acc * dx + coeffs[(2 * seg + idx) * nn + e]
        acc = acc * dx + coeffs[(3 * seg + idx) * nn + e]
        q[e] = acc


cdef void rhs(const double* breaks, int m, const cplx* coeffs, int n,
              double x, cplx damp, const cplx* y, cplx* d,
              cplx* qbuf) noexcept nogil:
    cdef int nn = n * n
    cdef int i, j, l
    cdef cplx acc
    eval_q(breaks, m, coeffs, n, x, qbuf)
    for i in range(nn):
        d[i] = y[nn + i]
    for i in range(n):
        for j in range(n):
            acc = 0
            for l in range(n):
                acc = acc + qbuf[i * n + l] * y[l * n + j]
            d[nn + i * n + j] = acc + damp * y[nn + i * n + j]


cdef int integrate_one(const double* breaks, int m, const cplx* coeffs,
                       int n, cplx sigma, double x_from,
                       const double* targets, int nt, cplx* y,
                       cplx* out_g, cplx* out_gp, double rtol, double atol,
                       long max_steps, double h0, double hmin, double span,
                       cplx* work, double* fail_x) noexcept nogil:
    cdef int nn = n * n, dim = 2 * nn
    cdef cplx* k1 = work
    cdef cplx* k2 = work + dim
    cdef cplx* k3 = work + 2 * dim
    cdef cplx* k4 = work + 3 * dim
    cdef cplx* k5 = work + 4 * dim
    cdef cplx* k6 = work + 5 * dim
    cdef cplx* k7 = work + 6 * dim
    cdef cplx* ytmp = work + 7 * dim
    cdef cplx* ynew = work + 8 * dim
    cdef cplx* qbuf = work + 9 * dim

    cdef cplx damp = -2j * sigma
    cdef double direction = 1.0 if targets[nt - 1] >= x_from else -1.0
    cdef double pos = x_from, h = h0, h_try, dx, target, remaining
    cdef double err, sc, aa, factor
    cdef long nsteps = 0
    cdef int ic, e, truncated
    cdef cplx ev

    rhs(breaks, m, coeffs, n, pos, damp, y, k1, qbuf)

    for ic in range(nt):
        target = targets[ic]
        while (target - pos) * direction > 1e-14 * span:
            remaining = (target - pos) * direction
            truncated = 1 if h >= remaining else 0
            h_try = remaining if truncated else h
            dx = h_try * direction

            for e in range(dim):
                ytmp[e] = y[e] + dx * (A21 * k1[e])
            rhs(breaks, m, coeffs, n, pos + C2 * dx, damp, ytmp, k2, qbuf)
            for e in range(dim):
                ytmp[e] = y[e] + dx * (A31 * k1[e] + A32 * k2[e])
            rhs(breaks, m, coeffs, n, pos + C3 * dx, damp, ytmp, k3, qbuf)
            for e in range(dim):
                ytmp[e] = y[e] + dx * (A41 * k1[e] + A42 * k2[e] + A43 * k3[e])
            rhs(breaks, m, coeffs, n, pos + C4 * dx, damp, ytmp, k4, qbuf)
            for e in range(dim):
                ytmp[e] = y[e] + dx * (A51 * k1[e] + A52 * k2[e] + A53 * k3[e]
                                       + A54 * k4[e])
            rhs(breaks, m, coeffs, n, pos + C5 * dx, damp, ytmp, k5, qbuf)
            for e in range(dim):
                ytmp[e] = y[e] + dx * (A61 * k1[e] + A62 * k2[e] + A63 * k3[e]
                                       + A64 * k4[e] + A65 * k5[e])
            rhs(breaks, m, coeffs, n, pos + dx, damp, ytmp, k6, qbuf)
            for e in range(dim):
                ynew[e] = y[e] + dx * (B1 * k1[e] + B3 * k3[e] + B4 * k4[e]
                                       + B5 * k5[e] + B6 * k6[e])
            rhs(breaks, m, coeffs, n, pos + dx, damp, ynew, k7, qbuf)

            err = 0.0
            for e in range(dim):
                ev = dx * (E1 * k1[e] + E3 * k3[e] + E4 * k4[e] + E5 * k5[e]
                           + E6 * k6[e] + E7 * k7[e])
                aa = abs(y[e])
                sc = abs(ynew[e])
                if aa > sc:
                    sc = aa
                sc = atol + rtol * sc
                aa = abs(ev) / sc
                err += aa * aa
            err = (err / dim) ** 0.5

            if err <= 1.0:
                pos = target if truncated else pos + dx
                for e in range(dim):
                    y[e] = ynew[e]
                    k1[e] = k7[e]
                factor = MAX_FACTOR if err == 0.0 else SAFETY * err ** -0.2
                if factor > MAX_FACTOR:
                    factor = MAX_FACTOR
                if truncated:
                    if h_try * factor > h:
                        h = h_try * factor
                else:
                    h = h_try * factor
            else:
                factor = SAFETY * err ** -0.2
                if factor < MIN_FACTOR:
                    factor = MIN_FACTOR
                h = h_try * factor

            if h < hmin:
                fail_x[0] = pos
                return 1
            nsteps += 1
            if nsteps > max_steps:
                fail_x[0] = pos
                return 2

        for e in range(nn):
            out_g[ic * nn + e] = y[e]
            out_gp[ic * nn + e] = y[nn + e]
    return 0


def integrate_batch(breaks, coeffs, sigmas, x_from, checkpoints, y0, yp0,
                    rtol=1e-10, atol=1e-12, max_steps=1000000):
    """Drop-in twin of :func:`matscat._kernels.ode_py.integrate_batch`."""
    from ..errors import IntegratorFailure

    cdef cnp.ndarray[double, ndim=1] br = np.ascontiguousarray(breaks,
                                                               dtype=float)
    cdef cnp.ndarray[cplx, ndim=1] cf = np.ascontiguousarray(
        np.asarray(coeffs, dtype=complex).ravel())
    sig_arr = np.atleast_1d(np.asarray(sigmas, dtype=complex))
    cdef cnp.ndarray[cplx, ndim=1] sig = np.ascontiguousarray(sig_arr)
    cdef cnp.ndarray[double, ndim=1] cps = np.ascontiguousarray(
        checkpoints, dtype=float)

    coeffs_arr = np.asarray(coeffs)
    cdef int n = coeffs_arr.shape[2]
    cdef int nb = sig.shape[0], nt = cps.shape[0], m = br.shape[0]
    cdef int nn = n * n, dim = 2 * nn

    ystack = np.empty((nb, 2, n, n), dtype=complex)
    ystack[:, 0] = np.asarray(y0, dtype=complex)
    ystack[:, 1] = np.asarray(yp0, dtype=complex)
    cdef cnp.ndarray[cplx, ndim=1] ybuf = np.ascontiguousarray(ystack.ravel())

    out_g = np.empty((nb, nt, n, n), dtype=complex)
    out_gp = np.empty((nb, nt, n, n), dtype=complex)
    cdef cnp.ndarray[cplx, ndim=1] og = np.ascontiguousarray(out_g.ravel())
    cdef cnp.ndarray[cplx, ndim=1] ogp = np.ascontiguousarray(out_gp.ravel())

    cdef double span = abs(cps[nt - 1] - x_from)
    if span < 1e-30:
        span = 1e-30
    cdef double hmin = 1e-14 * max(1.0, abs(x_from), abs(cps[nt - 1]))
    cdef double scale0 = 1.0 + float(np.max(np.abs(sig_arr))) + float(
        np.sqrt(np.max(np.abs(coeffs_arr[3]), initial=0.0)))
    cdef double h0 = min(0.05 * span, 0.5 / scale0)
    cdef double rt = rtol, at = atol, xf = x_from
    cdef long ms = max_steps
    cdef double fail_x = 0.0
    cdef int status = 0, b
    cdef cplx* work

    with nogil:
        work = <cplx*> malloc((9 * dim + nn) * sizeof(cplx))
        if work == NULL:
            status = -1
        else:
            for b in range(nb):
                status = integrate_one(
                    &br[0], m, &cf[0], n, sig[b], xf, &cps[0], nt,
                    &ybuf[b * dim], &og[b * nt * nn], &ogp[b * nt * nn],
                    rt, at, ms, h0, hmin, span, work, &fail_x)
                if status != 0:
                    break
            free(work)

    if status == -1:
        raise MemoryError("kernel workspace allocation failed")
    if status == 1:
        raise IntegratorFailure(f"step size underflow at x = {fail_x:.6g}",
                                x=fail_x)
    if status == 2:
        raise IntegratorFailure(f"step budget exceeded at x = {fail_x:.6g}",
                                x=fail_x)
    return og.reshape(nb, nt, n, n), ogp.reshape(nb, nt, n, n)
