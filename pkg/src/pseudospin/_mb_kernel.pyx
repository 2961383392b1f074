# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Maxwell-Bloch propagation.

Same contract and algorithm as ``_mb_fallback.evolve``: Dormand-Prince 5(4),
one adaptive run per constant-drive piece, dense output at ``t_eval``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow, fmax, fmin, isfinite

cnp.import_array()

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784, A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40
cdef double D1 = -12715105075.0 / 11282082432, D3 = 87487479700.0 / 32700410799
cdef double D4 = -10690763975.0 / 1880347072, D5 = 701980252875.0 / 199316789632
cdef double D6 = -1453857185.0 / 822651844, D7 = 69997945.0 / 29380423

cdef enum:
    NDIM = 5


cdef inline void rhs(double* y, double* f, double G, double kappa, double gamma,
                     double dc, double ds, double vr, double vi) nogil:
    cdef double ar = y[0], ai = y[1], sr = y[2], si = y[3], z = y[4]
    f[0] = -kappa * ar + dc * ai + G * si + vi
    f[1] = -kappa * ai - dc * ar - G * sr - vr
    f[2] = -gamma * sr + ds * si - 2.0 * G * z * ai
    f[3] = -gamma * si - ds * sr + 2.0 * G * z * ar
    f[4] = -2.0 * G * (ar * si - ai * sr)


class IntegrationFailure(RuntimeError):
    def __init__(self, message, t_last):
        super().__init__(message)
        self.t_last = t_last


cdef int _piece(double* y, double t0, double t_end, double[:] t_eval, Py_ssize_t k_lo,
                Py_ssize_t k_hi, double[:, :] out, double G, double kappa, double gamma,
                double dc, double ds, double vr, double vi, double rtol, double[:] atol,
                double max_step, long* n_steps, double* t_fail) nogil:
    """Returns 0 on success, 1 on underflow, 2 on non-finite values."""
    cdef double k1[NDIM], k2[NDIM], k3[NDIM], k4[NDIM], k5[NDIM], k6[NDIM], k7[NDIM]
    cdef double yt[NDIM], ynew[NDIM], dy[NDIM], bspl[NDIM], r4[NDIM], r5[NDIM]
    cdef double t = t0, h, h0, h1, d0, d1, d2, sc, err, fac, tnew, s, s1, ev
    cdef int i, last, rejected_last = 0, first_dense
    cdef Py_ssize_t k = k_lo
    cdef double eps = 2.220446049250313e-16
    cdef double span = t_end - t0

    while k < k_hi and t_eval[k] <= t0:
        for i in range(NDIM):
            out[k, i] = y[i]
        k += 1

    max_step = fmin(max_step, span)
    rhs(y, k1, G, kappa, gamma, dc, ds, vr, vi)
    # initial step (Hairer)
    d0 = 0.0
    d1 = 0.0
    for i in range(NDIM):
        sc = atol[i] + rtol * fabs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (k1[i] / sc) ** 2
    d0 = sqrt(d0 / NDIM)
    d1 = sqrt(d1 / NDIM)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = fmin(fmin(h0, span), max_step)
    for i in range(NDIM):
        yt[i] = y[i] + h0 * k1[i]
    rhs(yt, k2, G, kappa, gamma, dc, ds, vr, vi)
    d2 = 0.0
    for i in range(NDIM):
        sc = atol[i] + rtol * fabs(y[i])
        d2 += ((k2[i] - k1[i]) / sc) ** 2
    d2 = sqrt(d2 / NDIM) / h0
    if fmax(d1, d2) <= 1e-15:
        h1 = fmax(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / fmax(d1, d2), 0.2)
    h = fmin(fmin(fmin(100 * h0, h1), span), max_step)

    while t < t_end:
        if h < 16 * eps * fmax(fabs(t), fabs(t_end)):
            t_fail[0] = t
            return 1
        last = t + h >= t_end - 1e-15 * fabs(t_end)
        if last:
            h = t_end - t
        for i in range(NDIM):
            yt[i] = y[i] + h * (A21 * k1[i])
        rhs(yt, k2, G, kappa, gamma, dc, ds, vr, vi)
        for i in range(NDIM):
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        rhs(yt, k3, G, kappa, gamma, dc, ds, vr, vi)
        for i in range(NDIM):
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs(yt, k4, G, kappa, gamma, dc, ds, vr, vi)
        for i in range(NDIM):
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs(yt, k5, G, kappa, gamma, dc, ds, vr, vi)
        for i in range(NDIM):
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        rhs(yt, k6, G, kappa, gamma, dc, ds, vr, vi)
        for i in range(NDIM):
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        rhs(ynew, k7, G, kappa, gamma, dc, ds, vr, vi)

        err = 0.0
        for i in range(NDIM):
            if not isfinite(ynew[i]) or not isfinite(k7[i]):
                t_fail[0] = t
                return 2
            ev = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol[i] + rtol * fmax(fabs(y[i]), fabs(ynew[i]))
            err += (ev / sc) ** 2
        err = sqrt(err / NDIM)

        if err <= 1.0:
            tnew = t_end if last else t + h
            first_dense = 1
            while k < k_hi and t_eval[k] <= tnew:
                if first_dense:
                    for i in range(NDIM):
                        dy[i] = ynew[i] - y[i]
                        bspl[i] = h * k1[i] - dy[i]
                        r4[i] = dy[i] - h * k7[i] - bspl[i]
                        r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i]
                                     + D6 * k6[i] + D7 * k7[i])
                    first_dense = 0
                s = (t_eval[k] - t) / h
                s1 = 1.0 - s
                for i in range(NDIM):
                    out[k, i] = y[i] + s * (dy[i] + s1 * (bspl[i] + s * (r4[i] + s1 * r5[i])))
                k += 1
            t = tnew
            for i in range(NDIM):
                y[i] = ynew[i]
                k1[i] = k7[i]
            n_steps[0] += 1
            if err == 0.0:
                fac = 5.0
            else:
                fac = fmin(5.0, fmax(0.2, 0.9 * pow(err, -0.2)))
            if rejected_last:
                fac = fmin(fac, 1.0)
            rejected_last = 0
            h = fmin(h * fac, max_step)
        else:
            rejected_last = 1
            h *= fmax(0.2, 0.9 * pow(err, -0.2))

    while k < k_hi:
        for i in range(NDIM):
            out[k, i] = y[i]
        k += 1
    return 0


def evolve(y0, coeffs, breaks, drive_re, drive_im, t_eval, double rtol, atol, double max_step):
    """Propagate across every drive piece; returns (samples, final_state, n_steps)."""
    cdef double G = coeffs[0], kappa = coeffs[1], gamma = coeffs[2]
    cdef double dc = coeffs[3], ds = coeffs[4]
    cdef double[:] tv = np.ascontiguousarray(t_eval, dtype=np.float64)
    cdef double[:] br = np.ascontiguousarray(breaks, dtype=np.float64)
    cdef double[:] dre = np.ascontiguousarray(drive_re, dtype=np.float64)
    cdef double[:] dim = np.ascontiguousarray(drive_im, dtype=np.float64)
    cdef double[:] at = np.ascontiguousarray(np.broadcast_to(np.asarray(atol, dtype=np.float64), (NDIM,)))
    out_arr = np.empty((tv.shape[0], NDIM))
    cdef double[:, :] out = out_arr
    cdef double y[NDIM]
    cdef Py_ssize_t n_pieces = br.shape[0] - 1, p, lo = 0, hi
    cdef long n_steps = 0
    cdef double t_fail = 0.0
    cdef int status
    cdef Py_ssize_t n_eval = tv.shape[0]
    for i in range(NDIM):
        y[i] = y0[i]
    for p in range(n_pieces):
        hi = lo
        if p == n_pieces - 1:
            hi = n_eval
        else:
            while hi < n_eval and tv[hi] < br[p + 1]:
                hi += 1
        with nogil:
            status = _piece(y, br[p], br[p + 1], tv, lo, hi, out, G, kappa, gamma, dc, ds,
                            dre[p], dim[p], rtol, at, max_step, &n_steps, &t_fail)
        if status == 1:
            raise IntegrationFailure("step size underflow", t_fail)
        if status == 2:
            raise IntegrationFailure("non-finite derivative", t_fail)
        lo = hi
    final = np.array([y[0], y[1], y[2], y[3], y[4]])
    return out_arr, final, n_steps
