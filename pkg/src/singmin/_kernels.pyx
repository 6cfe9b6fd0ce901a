# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of `potential_pieces` and `sweep` from _kernels_py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, log, sin, cos, sqrt, fmin

cnp.import_array()

cdef double LOG5 = log(5.0)


cdef inline double _psi_s(double a, int part) nogil:
    cdef double l1, l2, th, p, c, v = 0.0
    if a == 0.0:
        return 0.0
    l1 = -log(a)
    l2 = log(l1)
    if part & 1:
        v += 402.0 / (a * log(l1 - LOG5))
    if part & 2:
        th = log(l2)
        p = l1 * l2
        c = cos(th)
        v += 3.0 + 4.0 * fabs(c * p + sin(th) + c * (1 + l2)) / (a * p * p)
    return v


cdef inline double _base_s(double t) nogil:
    if t == 0.0:
        return 0.0
    return t * sin(log(log(-log(fabs(t)))))


cdef inline double _integrand(double t, double ta, double ua, double slope, int part) nogil:
    cdef double a = fabs(t), y
    if a == 0.0:
        return 0.0
    y = ua + slope * (t - ta) - _base_s(t)
    return _psi_s(a, part) * fmin(fabs(y), 5.0 * a)


cdef void _simpson(double a, double b, double fa, double fm, double fb, double ta, double ua,
                   double slope, int part, double tol, int depth, double* acc) nogil:
    cdef double m = 0.5 * (a + b)
    cdef double lm = 0.5 * (a + m), rm = 0.5 * (m + b)
    cdef double flm = _integrand(lm, ta, ua, slope, part)
    cdef double frm = _integrand(rm, ta, ua, slope, part)
    cdef double h = b - a
    cdef double whole = h * (fa + 4 * fm + fb) / 6
    cdef double left = 0.5 * h * (fa + 4 * flm + fm) / 6
    cdef double right = 0.5 * h * (fm + 4 * frm + fb) / 6
    cdef double diff = left + right - whole
    acc[2] += 2
    if depth <= 0 or fabs(diff) <= 15 * tol:
        acc[0] += left + right + diff / 15
        acc[1] += fabs(diff) / 15
        return
    _simpson(a, m, fa, flm, fm, ta, ua, slope, part, 0.5 * tol, depth - 1, acc)
    _simpson(m, b, fm, frm, fb, ta, ua, slope, part, 0.5 * tol, depth - 1, acc)


def potential_pieces(pieces, ua, slopes, ta, int part, double tol, int max_depth):
    cdef double[:, ::1] pc = np.ascontiguousarray(pieces, dtype=np.float64)
    cdef double[::1] UA = np.ascontiguousarray(ua, dtype=np.float64)
    cdef double[::1] SL = np.ascontiguousarray(slopes, dtype=np.float64)
    cdef double[::1] TA = np.ascontiguousarray(ta, dtype=np.float64)
    cdef Py_ssize_t n = pc.shape[0], k
    vals_a = np.empty(n)
    errs_a = np.empty(n)
    cdef double[::1] vals = vals_a
    cdef double[::1] errs = errs_a
    cdef double acc[3]
    cdef double a, b, fa, fm, fb
    cdef long evals = 0
    with nogil:
        for k in range(n):
            a = pc[k, 0]
            b = pc[k, 1]
            acc[0] = 0.0
            acc[1] = 0.0
            acc[2] = 3
            if b > a:
                fa = _integrand(a, TA[k], UA[k], SL[k], part)
                fm = _integrand(0.5 * (a + b), TA[k], UA[k], SL[k], part)
                fb = _integrand(b, TA[k], UA[k], SL[k], part)
                _simpson(a, b, fa, fm, fb, TA[k], UA[k], SL[k], part, tol, max_depth, acc)
            vals[k] = acc[0]
            errs[k] = acc[1]
            evals += <long>acc[2]
    return vals_a, errs_a, evals


cdef inline double _element(double ul, double ur, const double[:, ::1] W, const double[:, ::1] P,
                            const double[:, ::1] CAP, const double[:, ::1] WQ, const double[::1] LAM,
                            Py_ssize_t e) nogil:
    cdef Py_ssize_t q
    cdef double s = 0.0, y
    for q in range(LAM.shape[0]):
        y = ul + (ur - ul) * LAM[q] - W[e, q]
        s += WQ[e, q] * P[e, q] * fmin(fabs(y), CAP[e, q])
    return s


cdef inline double _local(Py_ssize_t j, double v, double[::1] U, const double[::1] H,
                          const double[:, ::1] W, const double[:, ::1] P, const double[:, ::1] CAP,
                          const double[:, ::1] WQ, const double[::1] LAM) nogil:
    cdef double el = (v - U[j - 1]) * (v - U[j - 1]) / H[j - 1] + _element(U[j - 1], v, W, P, CAP, WQ, LAM, j - 1)
    cdef double er = (U[j + 1] - v) * (U[j + 1] - v) / H[j] + _element(v, U[j + 1], W, P, CAP, WQ, LAM, j)
    return el + er


def element_potential(double ul, double ur, W, P, CAP, WQ, LAM, Py_ssize_t e):
    return _element(ul, ur, np.ascontiguousarray(W, dtype=np.float64), np.ascontiguousarray(P, dtype=np.float64),
                    np.ascontiguousarray(CAP, dtype=np.float64), np.ascontiguousarray(WQ, dtype=np.float64),
                    np.ascontiguousarray(LAM, dtype=np.float64), e)


def sweep(double[::1] U, H, W, P, CAP, WQ, LAM, double radius, int iters, double accept):
    cdef const double[::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef const double[:, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(CAP, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(WQ, dtype=np.float64)
    cdef const double[::1] Lv = np.ascontiguousarray(LAM, dtype=np.float64)
    cdef double g = (sqrt(5.0) - 1.0) / 2.0
    cdef double total = 0.0, u0, e0, a, b, c, d, fc, fd, v, fv
    cdef long moves = 0
    cdef Py_ssize_t j
    cdef int it
    with nogil:
        for j in range(1, U.shape[0] - 1):
            u0 = U[j]
            e0 = _local(j, u0, U, Hv, Wv, Pv, Cv, Qv, Lv)
            a = u0 - radius
            b = u0 + radius
            c = b - g * (b - a)
            d = a + g * (b - a)
            fc = _local(j, c, U, Hv, Wv, Pv, Cv, Qv, Lv)
            fd = _local(j, d, U, Hv, Wv, Pv, Cv, Qv, Lv)
            for it in range(iters):
                if fc < fd:
                    b = d
                    d = c
                    fd = fc
                    c = b - g * (b - a)
                    fc = _local(j, c, U, Hv, Wv, Pv, Cv, Qv, Lv)
                else:
                    a = c
                    c = d
                    fc = fd
                    d = a + g * (b - a)
                    fd = _local(j, d, U, Hv, Wv, Pv, Cv, Qv, Lv)
            if fc < fd:
                v = c
                fv = fc
            else:
                v = d
                fv = fd
            if e0 - fv > accept:
                U[j] = v
                total += e0 - fv
                moves += 1
    return total, moves
