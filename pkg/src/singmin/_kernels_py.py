"""Double-precision kernels, pure Python/numpy reference implementation.

`_kernels.pyx` mirrors every function here; `kernels.py` picks one at import.
All t arguments are plain offsets from x_0 = 0 (|t| < 1/e).
"""

from __future__ import annotations

import math

import numpy as np

LOG5 = math.log(5.0)


def _logs(a):
    l1 = np.log(1.0 / a)
    l2 = np.log(l1)
    return l1, l2, np.log(l2)


def base(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    nz = t != 0
    a = np.abs(t[nz])
    out[nz] = t[nz] * np.sin(_logs(a)[2])
    return out


def base_d1(t):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    l1, l2, th = _logs(a)
    return np.sin(th) - np.cos(th) / (l1 * l2)


def base_d2(t):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    l1, l2, th = _logs(a)
    c, s = np.cos(th), np.sin(th)
    p = l1 * l2
    v = -(c * p + s + c * (1 + l2)) / (a * p * p)
    return np.where(t > 0, v, -v)


def base_d2_majorant(t):
    a = np.abs(np.asarray(t, dtype=float))
    l1, l2, _ = _logs(a)
    p = l1 * l2
    return (1 + (2 + l2) / p) / (a * p)


def psi(t, part: int = 3):
    """psi^1 (part=1), psi^2 (part=2) or their sum (part=3); 0 at t=0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    nz = t != 0
    a = np.abs(t[nz])
    l1, l2, th = _logs(a)
    if part & 1:
        out[nz] += 402.0 / (a * np.log(l1 - LOG5))
    if part & 2:
        p = l1 * l2
        c, s = np.cos(th), np.sin(th)
        out[nz] += 3.0 + 4.0 * np.abs(c * p + s + c * (1 + l2)) / (a * p * p)
    return out


def t_psi(t, part: int = 3):
    """|t| psi(t), finite at 0."""
    t = np.asarray(t, dtype=float)
    return np.abs(t) * psi(t, part)


def phi0(t, y, part: int = 3):
    """phi~_0(t, y) = psi(t) min(|y|, 5|t|)."""
    t = np.asarray(t, dtype=float)
    return psi(t, part) * np.minimum(np.abs(y), 5.0 * np.abs(t))


# ---- scalar helpers for the adaptive quadrature --------------------------


def _psi_s(a: float, part: int) -> float:
    if a == 0.0:
        return 0.0
    l1 = -math.log(a)
    l2 = math.log(l1)
    v = 0.0
    if part & 1:
        v += 402.0 / (a * math.log(l1 - LOG5))
    if part & 2:
        th = math.log(l2)
        p = l1 * l2
        c = math.cos(th)
        v += 3.0 + 4.0 * abs(c * p + math.sin(th) + c * (1 + l2)) / (a * p * p)
    return v


def _base_s(t: float) -> float:
    if t == 0.0:
        return 0.0
    return t * math.sin(math.log(math.log(-math.log(abs(t)))))


def _integrand(t: float, ta: float, ua: float, slope: float, part: int) -> float:
    a = abs(t)
    if a == 0.0:
        return 0.0
    y = ua + slope * (t - ta) - _base_s(t)
    return _psi_s(a, part) * min(abs(y), 5.0 * a)


def _simpson(a, b, fa, fm, fb, ta, ua, slope, part, tol, depth, acc):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm = _integrand(lm, ta, ua, slope, part)
    frm = _integrand(rm, ta, ua, slope, part)
    acc[2] += 2
    h = b - a
    whole = h * (fa + 4 * fm + fb) / 6
    left = 0.5 * h * (fa + 4 * flm + fm) / 6
    right = 0.5 * h * (fm + 4 * frm + fb) / 6
    diff = left + right - whole
    if depth <= 0 or abs(diff) <= 15 * tol:
        acc[0] += left + right + diff / 15
        acc[1] += abs(diff) / 15
        return
    _simpson(a, m, fa, flm, fm, ta, ua, slope, part, 0.5 * tol, depth - 1, acc)
    _simpson(m, b, fm, frm, fb, ta, ua, slope, part, 0.5 * tol, depth - 1, acc)


def potential_pieces(pieces, ua, slopes, ta, part: int, tol: float, max_depth: int):
    """Adaptive Simpson of psi(t) min(|u - w~|, 5|t|) over each piece.

    pieces: (k, 2) array of [a, b] subintervals, each inside one linear
    element of u, where u(t) = ua[k] + slopes[k] (t - ta[k]).
    Returns (values, error_estimates, evaluation_count).
    """
    pieces = np.asarray(pieces, dtype=float)
    n = pieces.shape[0]
    vals = np.empty(n)
    errs = np.empty(n)
    evals = 0
    for k in range(n):
        a, b = pieces[k]
        acc = [0.0, 0.0, 3]
        if b > a:
            fa = _integrand(a, ta[k], ua[k], slopes[k], part)
            fm = _integrand(0.5 * (a + b), ta[k], ua[k], slopes[k], part)
            fb = _integrand(b, ta[k], ua[k], slopes[k], part)
            _simpson(a, b, fa, fm, fb, ta[k], ua[k], slopes[k], part, tol, max_depth, acc)
        vals[k], errs[k] = acc[0], acc[1]
        evals += acc[2]
    return vals, errs, evals


# ---- fixed-rule element energies and the coordinate-descent sweep --------


def element_potential(ul, ur, W, P, CAP, WQ, LAM, e):
    """Potential of element e from precomputed quadrature data.

    W, P, CAP, WQ have shape (elements, q): w~, psi, 5|t| and weights (times
    element length) at the quadrature points; LAM (q,) holds the barycentric
    coordinate of each point.
    """
    y = ul + (ur - ul) * LAM - W[e]
    return float(np.dot(WQ[e] * P[e], np.minimum(np.abs(y), CAP[e])))


def _local_energy(j, v, U, H, W, P, CAP, WQ, LAM):
    el = (v - U[j - 1]) ** 2 / H[j - 1] + element_potential(U[j - 1], v, W, P, CAP, WQ, LAM, j - 1)
    er = (U[j + 1] - v) ** 2 / H[j] + element_potential(v, U[j + 1], W, P, CAP, WQ, LAM, j)
    return el + er


def sweep(U, H, W, P, CAP, WQ, LAM, radius: float, iters: int, accept: float):
    """One Gauss-Seidel pass of golden-section line searches over interior nodes.

    Each node value moves within [U_j - radius, U_j + radius]; a move is kept
    only when it lowers the local energy by more than `accept`.
    Returns (total decrease, accepted moves).  U is updated in place.
    """
    g = (math.sqrt(5.0) - 1.0) / 2.0
    total = 0.0
    moves = 0
    for j in range(1, U.shape[0] - 1):
        u0 = U[j]
        e0 = _local_energy(j, u0, U, H, W, P, CAP, WQ, LAM)
        a, b = u0 - radius, u0 + radius
        c, d = b - g * (b - a), a + g * (b - a)
        fc = _local_energy(j, c, U, H, W, P, CAP, WQ, LAM)
        fd = _local_energy(j, d, U, H, W, P, CAP, WQ, LAM)
        for _ in range(iters):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = _local_energy(j, c, U, H, W, P, CAP, WQ, LAM)
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = _local_energy(j, d, U, H, W, P, CAP, WQ, LAM)
        v, fv = (c, fc) if fc < fd else (d, fd)
        if e0 - fv > accept:
            U[j] = v
            total += e0 - fv
            moves += 1
    return float(total), moves
