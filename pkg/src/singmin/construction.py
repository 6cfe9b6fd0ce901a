"""Construction schedule (anchors, sigma_n, K_n, T_n, m_n, G_n, M_n, eps_n, R_n)
and the stage profiles w_0, ..., w_N.

Scale facts that shape this module:

* The T3 condition forces log log(1/T_n) to be about 2010 * 2^n / 0.9, so
  T_1 ~ exp(-e^4470) and every stage n >= 1 lives at offsets far below any
  float format.  All schedule constants are mpmath numbers (unbounded
  exponent).
* The anchor list is finite (x_0..x_N).  The limit w is therefore w_N
  itself, and sums indexed up to m_n stop at N.
* tau_n is carried in theta form only.  Near anchor n >= 1, the previous
  stage w_{n-1} coincides with w~ (the Y_i are pairwise disjoint, certified),
  so w_{n-1}(x_n + s) - w_{n-1}(x_n) is the Taylor polynomial
  m s + q s^2/2 with a cubic remainder bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from mpmath import mp, mpf

from . import kernels
from .special_functions import (
    DEFAULT_PREC,
    THETA_PLAIN_MAX,
    DomainError,
    GuardedValue,
    Offset,
    Real,
    as_offset,
    base_correction,
    compact_repr,
    constant_C,
    d2_majorant_scaled,
    eps,
    eval_base,
    eval_base_d1,
    eval_base_d2,
    eval_base_d3_bound,
    half_width,
    magnitude_from_theta,
    psi,
    t_psi,
    t_psi_majorant,
    theta_of,
)

SAFETY = mpf("0.9")
INFLATE = mpf("1.1")


class CertificateError(RuntimeError):
    def __init__(self, failures):
        self.failures = list(failures)
        names = ", ".join(f"{c.name}[n={c.stage}]" for c in self.failures)
        super().__init__(f"certificate failure: {names}")


@dataclass(frozen=True)
class Certificate:
    __repr__ = compact_repr
    name: str
    stage: int
    lhs: mpf
    rhs: mpf
    relation: str
    passed: bool
    margin: mpf
    note: str = ""


def _check(name, n, lhs, rhs, relation="<", note="") -> Certificate:
    lhs, rhs = mpf(lhs), mpf(rhs)
    ok = {"<": lhs < rhs, "<=": lhs <= rhs, "==": lhs == rhs}[relation]
    if relation == "==":
        margin = -abs(lhs - rhs)
    else:
        margin = (rhs - lhs) / abs(rhs) if rhs != 0 else rhs - lhs
    return Certificate(name, n, lhs, rhs, relation, bool(ok), margin, note)


def _close(name, n, a, b, rel, note="") -> Certificate:
    """|a - b| <= rel * max(|a|, |b|, tiny)."""
    a, b = mpf(a), mpf(b)
    scale = max(abs(a), abs(b))
    lhs = abs(a - b)
    rhs = rel * scale if scale else mpf(rel)
    return _check(name, n, lhs, rhs, "<=", note)


# ---------------------------------------------------------------- anchors


def default_anchors(count: int) -> list[mpf]:
    """0, then +-T k/2^j for odd k, breadth-first: 0, T/2, -T/2, T/4, -T/4, 3T/4, ..."""
    T = half_width()
    out = [mpf(0)]
    j = 1
    while len(out) < count:
        for k in range(1, 2**j, 2):
            for sgn in (1, -1):
                if len(out) < count:
                    out.append(sgn * T * k / 2**j)
        j += 1
    return out


def _validate_anchors(anchors, depth) -> list[mpf]:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    T = half_width()
    xs = [mpf(a) for a in anchors]
    if len(xs) < depth + 1:
        raise ValueError(f"need {depth + 1} anchors for depth {depth}, got {len(xs)}")
    xs = xs[: depth + 1]
    if xs[0] != 0:
        raise ValueError("the first anchor must be 0")
    for i, x in enumerate(xs):
        if not abs(x) < T:
            raise ValueError(f"anchor {i} = {mp.nstr(x, 10)} outside (-T, T)")
    if len(set(xs)) != len(xs):
        raise ValueError("duplicate anchors")
    return xs


# ---------------------------------------------------------------- schedule


@dataclass(frozen=True)
class StageRecord:
    __repr__ = compact_repr
    n: int
    x: mpf
    sigma: mpf | None
    K: mpf
    T: mpf
    eps: mpf
    R: mpf
    m: int | None = None
    G_radius: mpf | None = None
    G_count: int | None = None
    M: mpf | None = None
    T_binding: str = ""
    R_binding: str = ""

    @property
    def Y(self) -> tuple[mpf, mpf]:
        return (self.x - self.T, self.x + self.T)

    @property
    def Z(self) -> tuple[mpf, mpf]:
        return (self.x - self.R, self.x + self.R)


@dataclass(frozen=True)
class ConstructionSchedule:
    __repr__ = compact_repr
    anchors: tuple[mpf, ...]
    depth: int
    prec: int
    C: mpf
    stages: tuple[StageRecord, ...]
    certificates: tuple[Certificate, ...] = ()

    def __getitem__(self, n: int) -> StageRecord:
        return self.stages[n]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates)

    def G(self, n: int) -> list[tuple[mpf, mpf]]:
        st = self.stages[n]
        if st.G_radius is None:
            return []
        r = st.G_radius
        return [(x - r, x + r) for x in self.anchors[: st.G_count]]

    def in_G(self, n: int, anchor: int, s: mpf) -> bool:
        st = self.stages[n]
        return anchor < st.G_count and abs(s) < st.G_radius

    def tail(self, k: int) -> mpf:
        """Distance bound between w_k and the final proxy w_N."""
        if k >= self.depth:
            return mpf(0)
        return 20 * self.stages[k + 1].R


def _t3_bound_lambda(lam: mpf) -> mpf:
    """sup_{0<s<=S} |s psi(s)| bound with lam = log log(1/S), from the majorant."""
    l1 = mp.exp(lam)
    inner = lam + mp.log1p(-mp.log(5) / l1)
    v = 402 / inner + 4 * d2_majorant_scaled(l1, lam)
    if lam < 60:  # 3 S is below 2^-10^25 beyond this point
        v += 3 * mp.exp(-l1)
    return v


def _bisect_decreasing(f, target, lo, hi=None):
    """Smallest-ish lam with f(lam) <= target for decreasing f (returns the upper end)."""
    if hi is None:
        hi = lo * 2 + 1
        while f(hi) > target:
            lo, hi = hi, hi * 2
    for _ in range(mp.prec + 40):
        mid = (lo + hi) / 2
        if mid == lo or mid == hi:
            break
        if f(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def t3_bound(S: mpf) -> mpf:
    """Majorant bound of sup_{|t - x_n| <= S} |(t - x_n) psi_n(t)| (monotone in S)."""
    l1 = -mp.log(S)
    return t_psi_majorant(l1, mp.log(l1), S)


def _kn_sample(prev: Sequence[mpf], sigma: mpf, n_grid: int = 4096) -> mpf:
    T = float(half_width())
    total = 0.0
    for x in prev:
        smax = T + abs(float(x))
        s = np.geomspace(float(sigma), smax, n_grid)
        total += 2.0 * float(np.max(kernels.base_d2_majorant(s)))
    return mpf(total)


def _psi_sup_off(r: mpf, smax: float) -> mpf:
    """Upper estimate of sup psi(s) over s in [r, smax].

    On [r, 1e-3] psi^1 is decreasing and |s w~''| majorant factors are
    monotone, giving a closed-form bound; [1e-3, smax] is gridded.
    """
    cut = mpf("1e-3")
    best = mpf(0)
    if r < cut:
        l1 = -mp.log(r)
        l2 = mp.log(l1)
        p1 = 402 / (r * mp.log(l1 - mp.log(5)))
        lc1 = -mp.log(cut)
        lc2 = mp.log(lc1)
        maj = 1 / (r * l1 * l2) * (1 + (2 + lc2) / (lc2 * lc1))
        best = p1 + 3 + 4 * maj
    lo = max(float(r), 1e-3)
    if lo < smax:
        s = np.linspace(lo, smax, 4001)
        best = max(best, mpf(float(np.max(kernels.psi(s)))))
    return best


def _m_index(T_next: mpf, n: int) -> int:
    """Smallest integer m > n with 2^-m < T_next^2/256 (exact integer arithmetic)."""
    sign, man, exp, bc = T_next._mpf_
    # log2 T = exp + log2(man); need m > 8 - 2 log2 T
    with mp.workprec(2 * bc + 64):
        frac = -2 * mp.log(man, 2)
        fl = int(mp.floor(frac)) if man != 1 else 0
    m = 8 - 2 * exp + fl + 1
    return max(m, n + 1)


def _r1_bound(eps_n: mpf) -> mpf:
    # need 1/(log log(1/R) log(1/R)) < eps_n/2, i.e. lam e^lam > 2/eps_n with lam = log log 1/R
    target = 2 / eps_n
    lam = _bisect_decreasing(lambda l: -l * mp.exp(l), -target, mpf(0))
    return mp.exp(-mp.exp(lam))


def build_schedule(anchors: Sequence[Real] | None = None, depth: int = 6, prec: int = DEFAULT_PREC,
                   samples: int = 10_000) -> ConstructionSchedule:
    """Build and certify the schedule for anchors x_0..x_depth."""
    with mp.workprec(prec):
        N = depth
        if N < 0:
            raise ValueError("depth must be >= 0")
        xs = _validate_anchors(default_anchors(N + 1) if anchors is None else anchors, N)
        T = half_width()
        C = constant_C()
        sig, K, Ts, Tb = [None], [mpf(1)], [T], ["T0"]
        for n in range(1, N + 1):
            s = min(abs(xs[i] - xs[n]) for i in range(n)) / 2
            k = max(1 + K[-1], INFLATE * _kn_sample(xs[:n], s))
            target = SAFETY * mpf(2) ** -n / 5
            lam = _bisect_decreasing(_t3_bound_lambda, target, mp.log(-mp.log(T)))
            cands = {
                "T1": SAFETY * s,
                "T2": SAFETY * Ts[-1] / 2,
                "T3": mp.exp(-mp.exp(lam)),
                "T4": SAFETY / k,
            }
            name = min(cands, key=lambda key: cands[key])
            sig.append(s)
            K.append(k)
            Ts.append(cands[name])
            Tb.append(name)

        ms, radii, counts, Ms = [], [], [], []
        for n in range(N):
            m = _m_index(Ts[n + 1], n)
            cnt = min(m, N) + 1
            r = Ts[n + 1] ** 2 / (64 * C * cnt)
            tot = mpf(0)
            for i in range(cnt):
                smax = float(T + abs(xs[i]))
                tot += max(_psi_sup_off(r, smax), psi(Ts[i]).value)
            ms.append(m)
            radii.append(r)
            counts.append(cnt)
            Ms.append(INFLATE * tot)
        ms.append(None)
        radii.append(None)
        counts.append(None)
        Ms.append(None)

        Rs, Rb = [T], ["R0"]
        epss = [mpf(2) ** -n * (1 - mp.exp(-1)) for n in range(N + 1)]
        for n in range(1, N + 1):
            cands = {
                "R1": _r1_bound(epss[n]),
                "R2": Rs[-1] / 2,
                "R3": mpf(2) ** -n * Ts[n] ** 3 * epss[n] / (128 * 25 * Ms[n - 1]),
                "T": Ts[n],
            }
            name = min(cands, key=lambda key: cands[key])
            Rs.append(SAFETY * cands[name])
            Rb.append(name)

        stages = tuple(
            StageRecord(n, xs[n], sig[n], K[n], Ts[n], epss[n], Rs[n], ms[n], radii[n], counts[n], Ms[n], Tb[n], Rb[n])
            for n in range(N + 1)
        )
        sched = ConstructionSchedule(tuple(xs), N, prec, C, stages)
        certs = certify_schedule(sched, samples=samples)
        sched = ConstructionSchedule(tuple(xs), N, prec, C, stages, tuple(certs))
        bad = [c for c in certs if not c.passed]
        if bad:
            raise CertificateError(bad)
        return sched


def _t3_samples(Tn: mpf, n: int, samples: int) -> mpf:
    """Sampled sup of |s| psi(s) over 0 < s <= T_n (uniform, geometric, theta)."""
    rng = np.random.default_rng(1000 + n)
    best = mpf(0)
    pts = [Tn * mpf(float(u)) for u in rng.uniform(0.0, 1.0, samples)] + [Tn]
    pts += [Tn * mpf(2) ** -k for k in range(1, 400)]
    for s in pts:
        if s > 0:
            best = max(best, t_psi(s).value)
    th = theta_of(Tn)
    for k in range(1, 200):
        v = t_psi(Offset.from_theta(th + mpf(k) / 20))
        best = max(best, v.value + v.abs_error)
    return best


def _mn_samples(sched: ConstructionSchedule, n: int) -> mpf:
    st = sched.stages[n]
    T = half_width()
    r, cnt = st.G_radius, st.G_count
    xs = sched.anchors[:cnt]
    tvals = [sched.stages[i].T for i in range(cnt)]
    floors = [psi(t).value for t in tvals]

    def total(anchor, s):
        acc = mpf(0)
        for i in range(cnt):
            d = s if i == anchor else (xs[anchor] - xs[i]) + s
            p = psi(d).value if d != 0 else mp.inf
            acc += max(p, floors[i])
        return acc

    best = mpf(0)
    for j in range(cnt):
        for sgn in (1, -1):
            for f in [1 + mpf(2) ** -40, mpf(2), mpf(16), mpf(10) ** 6]:
                best = max(best, total(j, sgn * r * f))
    rng = np.random.default_rng(2000 + n)
    for t in rng.uniform(-float(T), float(T), 400):
        t = mpf(float(t))
        j = min(range(cnt), key=lambda i: abs(t - xs[i]))
        if abs(t - xs[j]) >= r:
            best = max(best, total(j, t - xs[j]))
    return best


def certify_schedule(sched: ConstructionSchedule, prec: int | None = None, samples: int = 10_000) -> list[Certificate]:
    """Re-evaluate every schedule inequality from the stored values."""
    prec = prec or sched.prec
    out: list[Certificate] = []
    with mp.workprec(prec):
        T = half_width()
        C = sched.C
        xs = sched.anchors
        N = sched.depth
        st = sched.stages
        tol = mpf(2) ** (16 - min(prec, sched.prec))
        for n in range(N + 1):
            s = st[n]
            out.append(_close("eps", n, s.eps, mpf(2) ** -n * (1 - mp.exp(-1)), tol))
            if n == 0:
                out.append(_close("K0", 0, s.K, 1, 0))
                out.append(_close("T0", 0, s.T, T, tol))
                out.append(_close("R0", 0, s.R, s.T, 0))
            else:
                sig = min(abs(xs[i] - xs[n]) for i in range(n)) / 2
                out.append(_close("sigma", n, s.sigma, sig, tol))
                out.append(_check("Kn2", n, 1 + st[n - 1].K, s.K, "<="))
                out.append(_check("Kn", n, _kn_certify(xs[:n], s.sigma), s.K, "<=",
                                  "sampled: uniform grid plus sigma-boundary points, d2 majorant"))
                out.append(_check("T1", n, s.T, s.sigma))
                out.append(_check("T2", n, s.T, st[n - 1].T / 2))
                lhs = max(t3_bound(s.T), _t3_samples(s.T, n, samples))
                out.append(_check("T3", n, lhs, mpf(2) ** -n / 5, "<", "majorant bound at T_n and sampled sup"))
                out.append(_check("T4", n, s.T, 1 / s.K))
                out.append(_check("R1", n, 1 / (mp.log(-mp.log(s.R)) * -mp.log(s.R)), s.eps / 2))
                out.append(_check("R2", n, s.R, st[n - 1].R / 2))
                out.append(_check("R3", n, s.R, mpf(2) ** -n * s.T**3 * s.eps / (128 * 25 * st[n - 1].M)))
                out.append(_check("RleT", n, s.R, s.T, "<="))
            if n < N:
                out.append(_check("mn", n, mp.ldexp(mpf(1), -s.m), st[n + 1].T ** 2 / 256))
                out.append(_check("mn_index", n, n, s.m))
                meas = 2 * s.G_radius * s.G_count
                out.append(_check("Fnmeas", n, meas, st[n + 1].T ** 2 / (16 * C), "<="))
                inside = max(abs(x) + s.G_radius for x in xs[: s.G_count])
                out.append(_check("G_in_domain", n, inside, T, "<="))
                out.append(_check("G_covers", n, min(s.m, N) + 1, s.G_count, "<="))
                out.append(_check("Mn", n, _mn_samples(sched, n), s.M, "<=", "sampled off G_n"))
        # Y_i (i >= 1) pairwise disjoint and free of other anchors
        for i in range(1, N + 1):
            gap = min([abs(xs[i] - xs[j]) - st[i].T - (st[j].T if j > 0 else 0) for j in range(N + 1) if j != i])
            out.append(_check("Y_disjoint", i, 0, gap, "<"))
            out.append(_check("Y_in_domain", i, abs(xs[i]) + st[i].T, T, "<"))
    return out


def _kn_certify(prev: Sequence[mpf], sigma: mpf) -> mpf:
    T = float(half_width())
    t = np.linspace(-T, T, 10_001)
    extra = []
    for x in prev:
        for f in (1.0 + 1e-12, 1.5, 3.0):
            extra += [float(x) + f * float(sigma), float(x) - f * float(sigma)]
    t = np.concatenate([t, np.array(extra)])
    t = t[(t >= -T) & (t <= T)]
    d = np.stack([t - float(x) for x in prev])
    keep = np.all(np.abs(d) >= float(sigma), axis=0)
    d = d[:, keep]
    tot = 2.0 * np.sum(kernels.base_d2_majorant(d), axis=0)
    return mpf(float(np.max(tot))) if tot.size else mpf(0)


# ------------------------------------------------------------- alpha / tau


def _eps_theta(theta: mpf) -> mpf:
    """e^{-theta - e^theta} = 1/(L1 L2)."""
    return mp.exp(-theta - mp.exp(theta))


def _excess(theta_p: mpf, delta: mpf) -> mpf:
    """w~'(theta_p + delta) - 1 for a peak theta_p = pi/2 mod 2pi (no cancellation)."""
    return -2 * mp.sin(delta / 2) ** 2 + mp.sin(delta) * _eps_theta(theta_p + delta)


def _peak_after(theta0: mpf, base: mpf) -> mpf:
    """Smallest base + 2 pi k with k integer and value >= theta0 - 1e-3."""
    k = mp.ceil((theta0 - mpf("1e-3") - base) / (2 * mp.pi))
    return base + 2 * mp.pi * k


def _solve_near_peak(theta_p: mpf, a: mpf) -> mpf:
    """Smallest delta on the rising flank with _excess(theta_p, delta) = a."""
    e = _eps_theta(theta_p)
    disc = e * e - 2 * a
    if disc < 0:
        raise ArithmeticError("target above the peak value")
    delta = 2 * a / (e + mp.sqrt(disc)) if a != 0 else mpf(0)
    for _ in range(60):  # Newton polish on the exact expression
        f = _excess(theta_p, delta) - a
        df = -mp.sin(delta) + mp.cos(delta) * _eps_theta(theta_p + delta)
        if df == 0:
            break
        step = f / df
        delta -= step
        if abs(step) <= abs(delta) * mpf(2) ** (-mp.prec + 4) or f == 0:
            break
    return delta


@dataclass(frozen=True)
class AlphaTau:
    __repr__ = compact_repr
    alpha: mpf
    tau: Offset
    rho_excess: mpf | None
    A_excess: mpf | None
    B_excess: mpf | None
    residual: mpf
    witness_y: mpf | None
    witness_z: mpf | None


def _flank_excess(theta_R: mpf, base: mpf) -> mpf:
    """max over theta >= theta_R of +-(w~'(theta)) - 1 near the first extremum after theta_R."""
    p = _peak_after(theta_R, base)
    e = _eps_theta(p)
    best = _excess(p, e) if p + e >= theta_R else mpf(-1)
    d0 = theta_R - p
    if abs(d0) < mpf("1e-3"):
        best = max(best, _excess(p, d0))
    if p + e < theta_R:
        nxt = p + 2 * mp.pi
        best = max(best, _excess(nxt, _eps_theta(nxt)))
    return best


def find_alpha_tau(schedule: ConstructionSchedule, n: int, m: Real) -> AlphaTau:
    """alpha_n and tau_n (theta form) with alpha w~'(tau) = m, tau <= R_n."""
    with mp.workprec(schedule.prec):
        m = mpf(m)
        st = schedule.stages[n]
        if n >= 1 and not abs(m) < 2 - schedule.stages[n - 1].eps:
            raise ValueError("|m| must be below 2 - eps_{n-1}")
        theta_R = theta_of(st.R)
        half_pi = mp.pi / 2
        if abs(m) < 1 - mpf("1e-4"):
            theta = _scan_root(theta_R, m)
            tau = Offset.from_theta(theta)
            res = eval_base_d1(tau).value - m
            return AlphaTau(mpf(1), tau, None, None, None, res, None, None)
        if abs(m) <= 1:
            base = half_pi if m > 0 else 3 * half_pi
            p = _peak_after(theta_R, base)
            d = _solve_near_peak(p, abs(m) - 1)
            if p + d < theta_R:
                p += 2 * mp.pi
                d = _solve_near_peak(p, abs(m) - 1)
            tau = Offset.from_theta(p + d)
            res = (_excess(p, d) - (abs(m) - 1))
            return AlphaTau(mpf(1), tau, None, None, None, res, None, None)
        a_ex = _flank_excess(theta_R, half_pi)
        b_ex = _flank_excess(theta_R, 3 * half_pi)
        rho_ex = min(a_ex, b_ex)
        alpha = m / (1 + rho_ex)
        # alpha w~'(tau) = m  <=>  w~'(tau) = 1 + rho_ex (positive flank)
        p = _peak_after(theta_R, half_pi)
        if p + _eps_theta(p) < theta_R:
            p += 2 * mp.pi
        d = _solve_near_peak(p, rho_ex)
        if p + d < theta_R:
            raise ArithmeticError(f"no tau root found on theta >= {mp.nstr(theta_R, 12)}")
        tau = Offset.from_theta(p + d)
        res = alpha * (1 + _excess(p, d)) - m
        yb = _peak_after(theta_R, half_pi)
        zb = _peak_after(theta_R, 3 * half_pi)
        return AlphaTau(alpha, tau, rho_ex, a_ex, b_ex, res, yb + _eps_theta(yb), zb - _eps_theta(zb))


def _scan_root(theta_R: mpf, m: mpf) -> mpf:
    """Smallest theta >= theta_R with sin(theta) - cos(theta) e^{-theta-e^theta} = m."""

    def f(th):
        return mp.sin(th) - base_correction(mp.exp(mp.exp(th)), mp.exp(th), th) - m

    steps = 4096
    h = 2 * mp.pi / steps
    a, fa = theta_R, f(theta_R)
    if fa == 0:
        return a
    for k in range(1, steps + 200):
        b = theta_R + k * h
        fb = f(b)
        if fa * fb <= 0:
            for _ in range(mp.prec + 20):
                mid = (a + b) / 2
                if mid == a or mid == b:
                    break
                fm = f(mid)
                if fa * fm <= 0:
                    b = mid
                else:
                    a, fa = mid, fm
            return b
        a, fa = b, fb
    raise ArithmeticError(f"no root of w~' = m on theta in [{mp.nstr(theta_R, 12)}, +2pi]")


# ------------------------------------------------------------ stage profiles


@dataclass(frozen=True)
class LocalJet:
    """Taylor data of w~ at an anchor x: D(s) = w~(x+s) - w~(x) = m s + q s^2/2 + O(d3 |s|^3/6)."""

    __repr__ = compact_repr

    value: mpf
    slope: mpf
    curv: mpf
    d3: mpf

    @classmethod
    def at(cls, x: mpf, radius: mpf) -> "LocalJet":
        return cls(eval_base(x).value, eval_base_d1(x).value, eval_base_d2(x).value,
                   eval_base_d3_bound(abs(x) - radius))

    def D(self, s: mpf) -> tuple[mpf, mpf]:
        v = self.slope * s + self.curv * s * s / 2
        return v, self.d3 * abs(s) ** 3 / 6 + abs(v) * eps()

    def dD(self, s: mpf) -> tuple[mpf, mpf]:
        v = self.slope + self.curv * s
        return v, self.d3 * s * s / 2 + abs(v) * eps()


def _pl_integral(knots, s):
    """Integral from knots[0][0] to s of the piecewise-linear function through knots."""
    acc = mpf(0)
    for (a, ga), (b, gb) in zip(knots, knots[1:]):
        if s <= a:
            break
        e = min(s, b)
        ge = ga + (gb - ga) * (e - a) / (b - a)
        acc += (e - a) * (ga + ge) / 2
    return acc


def _pl_value(knots, s):
    for (a, ga), (b, gb) in zip(knots, knots[1:]):
        if a <= s <= b:
            return ga + (gb - ga) * (s - a) / (b - a)
    raise ValueError("outside the knot range")


@dataclass(frozen=True)
class Segment:
    __repr__ = compact_repr
    kind: str  # Inherited | CutoffAdjusted | Affine | ScaledBase
    left: Offset
    right: Offset
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StageProfile:
    """w_n near x_n.  Offsets s are relative to x_n; I(s) = w_n(x_n + s) - w_n(x_n)."""

    __repr__ = compact_repr

    n: int
    x: mpf
    T: mpf
    R: mpf
    alpha: mpf
    beta: mpf
    tau: Offset
    theta_tau: mpf
    m: mpf | None = None
    jet: LocalJet | None = None
    delta_l: mpf = mpf(0)
    delta_r: mpf = mpf(0)
    c_l: mpf = mpf(0)
    c_r: mpf = mpf(0)
    d_l: mpf = mpf(0)
    d_r: mpf = mpf(0)
    c_tau: mpf = mpf(0)
    c_tau_err: mpf = mpf(0)
    alpha_tau: AlphaTau | None = None
    certificates: tuple[Certificate, ...] = ()

    # --- cut-off pieces
    def knots_left(self):
        T, R = self.T, self.R
        return [(-T, mpf(0)), (-3 * T / 4, self.d_l), (-T / 2, mpf(0)), (-R, self.delta_l)]

    def knots_right(self):
        T, R = self.T, self.R
        return [(R, self.delta_r), (T / 2, mpf(0)), (3 * T / 4, -self.d_r), (T, mpf(0))]

    def g(self, s: mpf) -> mpf:
        if s <= -self.R:
            return _pl_value(self.knots_left(), s)
        if s >= self.R:
            return _pl_value(self.knots_right(), s)
        return self.delta_l if s < 0 else self.delta_r

    def chi_left(self, s: mpf) -> mpf:
        return _pl_integral(self.knots_left(), s)

    def chi_right(self, s: mpf) -> mpf:
        return self.c_r + _pl_integral(self.knots_right(), s)

    def breakpoints(self) -> list[mpf]:
        T, R = self.T, self.R
        return [-T, -3 * T / 4, -T / 2, -R, R, T / 2, 3 * T / 4, T]

    # --- classification
    def region(self, s: Offset) -> str:
        if s.is_zero:
            return "anchor"
        if s.is_theta:
            return "scaled" if s.theta >= self.theta_tau else "affine"
        a = s.magnitude
        if self.n == 0:
            return "scaled" if a <= self.T else "outside"
        if a >= self.T:
            return "outside"
        if a >= self.R:
            return "cutoff"
        return "scaled" if theta_of(a) >= self.theta_tau else "affine"

    def increment(self, s: Real | Offset) -> GuardedValue:
        """w_n(x_n + s) - w_n(x_n) for |s| < T_n (any s for n = 0)."""
        s = as_offset(s)
        reg = self.region(s)
        if reg == "anchor":
            return GuardedValue(mpf(0), mpf(0))
        if reg == "scaled":
            b = eval_base(s)
            return GuardedValue(self.alpha * b.value, abs(self.alpha) * b.abs_error)
        if self.n == 0:
            raise DomainError("offset outside [-T, T]")
        if reg == "outside":
            v, e = self.jet.D(s.sign * s.magnitude)
            return GuardedValue(v, e)
        if reg == "affine":
            side = -1 if s.sign < 0 else 1
            sv = s.materialize()
            if sv is None:
                bound = abs(self.m) * s.magnitude_bound() + abs(self.c_tau) + self.c_tau_err
                return GuardedValue(mpf(0), bound)
            v = self.m * sv + side * self.c_tau
            return GuardedValue(v, self.c_tau_err + abs(v) * eps())
        sv = s.sign * s.magnitude
        dv, de = self.jet.D(sv)
        chi = self.chi_left(sv) if sv < 0 else self.chi_right(sv)
        return GuardedValue(dv + chi, de + (abs(chi) + abs(dv)) * eps())

    def derivative(self, s: Real | Offset) -> GuardedValue:
        s = as_offset(s)
        reg = self.region(s)
        if reg == "anchor":
            raise DomainError("w_n' is undefined at the anchor")
        if reg == "scaled":
            d = eval_base_d1(s)
            return GuardedValue(self.alpha * d.value, abs(self.alpha) * d.abs_error)
        if self.n == 0:
            raise DomainError("offset outside [-T, T]")
        if reg == "affine":
            return GuardedValue(self.m, mpf(0))
        sv = s.sign * s.magnitude
        if sv in self.breakpoints():
            raise DomainError("w_n' evaluated at a cut-off breakpoint")
        dv, de = self.jet.dD(sv)
        if reg == "outside":
            return GuardedValue(dv, de)
        g = self.g(sv)
        return GuardedValue(dv + g, de + abs(g) * eps())

    def stage_change(self, s: Real | Offset) -> GuardedValue:
        """w_n(x_n + s) - w_{n-1}(x_n + s), free of the m s cancellation (n >= 1)."""
        s = as_offset(s)
        reg = self.region(s)
        if self.n == 0:
            raise DomainError("stage 0 has no predecessor")
        if reg in ("anchor", "outside"):
            return GuardedValue(mpf(0), mpf(0))
        sv = s.materialize()
        if sv is None:  # |s| < tau: both increments are O(|s|)
            return GuardedValue(mpf(0), (abs(self.alpha) + abs(self.m) + 1) * s.magnitude_bound())
        sv = s.sign * abs(sv)
        rem = self.jet.d3 * abs(sv) ** 3 / 6
        if reg == "cutoff":
            chi = self.chi_left(sv) if sv < 0 else self.chi_right(sv)
            return GuardedValue(chi, abs(chi) * eps())
        if reg == "affine":
            v = (self.c_tau if sv > 0 else -self.c_tau) - self.jet.curv * sv * sv / 2
            return GuardedValue(v, self.c_tau_err + rem + abs(v) * eps())
        b = eval_base(Offset.plain(sv))
        dv, de = self.jet.D(sv)
        v = self.alpha * b.value - dv
        return GuardedValue(v, abs(self.alpha) * b.abs_error + de + rem)

    def slope_change(self, s: Real | Offset) -> GuardedValue:
        """w_n'(x_n + s) - w_{n-1}'(x_n + s) on the cut-off and affine bands (n >= 1)."""
        s = as_offset(s)
        reg = self.region(s)
        if reg == "outside":
            return GuardedValue(mpf(0), mpf(0))
        if reg == "cutoff":
            sv = s.sign * s.magnitude
            g = self.g(sv)
            return GuardedValue(g, abs(g) * eps())
        if reg == "affine" and not s.is_theta:
            sv = s.sign * s.magnitude
            v = -self.jet.curv * sv
            return GuardedValue(v, self.jet.d3 * sv * sv / 2 + abs(v) * eps())
        raise DomainError("slope_change is defined on the cut-off and plain affine bands")

    def segments(self) -> list[Segment]:
        """Partition of Y_n (local offsets); the rest of [-T, T] is inherited."""
        P = Offset.plain
        if self.n == 0:
            return [Segment("ScaledBase", P(-self.T), P(self.T),
                            {"alpha": self.alpha, "beta": self.beta, "tau": self.tau})]
        tl, tr = self.tau.negate(), self.tau
        return [
            Segment("CutoffAdjusted", P(-self.T), P(-self.R),
                    {"knots": self.knots_left(), "c": self.c_l, "delta": self.delta_l, "d": self.d_l}),
            Segment("Affine", P(-self.R), tl, {"slope": self.m, "intercept": -self.c_tau}),
            Segment("ScaledBase", tl, tr, {"alpha": self.alpha, "beta": self.beta, "tau": self.tau}),
            Segment("Affine", tr, P(self.R), {"slope": self.m, "intercept": self.c_tau}),
            Segment("CutoffAdjusted", P(self.R), P(self.T),
                    {"knots": self.knots_right(), "c": self.c_r, "delta": self.delta_r, "d": self.d_r}),
        ]


def stage_zero(schedule: ConstructionSchedule) -> StageProfile:
    with mp.workprec(schedule.prec):
        T = schedule.stages[0].T
        return StageProfile(0, mpf(0), T, T, mpf(1), mpf(0), Offset.plain(T), theta_of(T))


def build_stage(schedule: ConstructionSchedule, n: int, previous: StageProfile | None = None) -> StageProfile:
    """Stage n of the construction from stage n-1, five branches."""
    if n == 0:
        return stage_zero(schedule)
    if previous is None or previous.n != n - 1:
        raise ValueError("build_stage needs the profile of stage n-1")
    with mp.workprec(schedule.prec):
        st = schedule.stages[n]
        T, R, K = st.T, st.R, st.K
        x = st.x
        # w_{n-1} = w~ on Y_n (Y_disjoint certificate), so the jet of w~ at x_n applies
        jet = LocalJet.at(x, T)
        m = jet.slope
        at = find_alpha_tau(schedule, n, m)
        alpha, tau = at.alpha, at.tau
        theta_tau = tau.theta
        # c_tau = alpha tau corr(tau); tiny, and only materialized when cheap
        tv = tau.materialize()
        l1, l2, th = tau.logs()
        corr = base_correction(l1, l2, th)
        if tv is not None:
            c_tau, c_tau_err = alpha * tv * corr, abs(alpha * tv * corr) * eps()
        else:
            c_tau, c_tau_err = mpf(0), abs(alpha) * tau.magnitude_bound() * abs(corr) * 2
        # m - jet.dD(-+R) and the value mismatches in closed form: q R sits far below ulp(m)
        delta_l = jet.curv * R
        delta_r = -jet.curv * R
        c_l = -jet.curv * R * R / 2 - c_tau
        c_r = -jet.curv * R * R / 2 + c_tau
        d_l = 4 / T * (c_l - delta_l / 2 * (T / 2 - R))
        d_r = 4 / T * (c_r + delta_r / 2 * (T / 2 - R))
        prof = StageProfile(n, x, T, R, alpha, jet.value, tau, theta_tau, m, jet,
                            delta_l, delta_r, c_l, c_r, d_l, d_r, c_tau, c_tau_err, at)
        certs = certify_stage(schedule, prof)
        prof = StageProfile(n, x, T, R, alpha, jet.value, tau, theta_tau, m, jet,
                            delta_l, delta_r, c_l, c_r, d_l, d_r, c_tau, c_tau_err, at, tuple(certs))
        bad = [c for c in certs if not c.passed]
        if bad:
            raise CertificateError(bad)
        return prof


def certify_stage(schedule: ConstructionSchedule, p: StageProfile) -> list[Certificate]:
    with mp.workprec(schedule.prec):
        return _certify_stage(schedule, p)


def _certify_stage(schedule: ConstructionSchedule, p: StageProfile) -> list[Certificate]:
    n = p.n
    st = schedule.stages[n]
    out = []
    tol = mpf(2) ** -100
    out.append(_check("alpha_bound", n, abs(p.alpha), 2))
    if abs(p.m) > 1:
        out.append(_check("alpha_ge_1", n, 1, abs(p.alpha), "<="))
        out.append(_check("rho_low", n, 0, p.alpha_tau.rho_excess))
        out.append(_check("rho_high", n, p.alpha_tau.rho_excess, st.eps / 2))
    for sgn in (1, -1):
        slope = p.alpha * eval_base_d1(p.tau if sgn > 0 else p.tau.negate()).value
        out.append(_check("slope_match", n, abs(slope - p.m), tol, "<="))
    out.append(_check("tau_le_R", n, theta_of(p.R), p.theta_tau, "<="))
    # |alpha w~'| on Z_n: |w~'| <= 1 + corr(R) there
    l1 = -mp.log(p.R)
    out.append(_check("eta", n, abs(p.alpha) * (1 + 1 / (l1 * mp.log(l1))), 2 - st.eps))
    # continuity at -R, +R (cutoff vs affine) and at -+tau (affine vs scaled)
    for sv in (-p.R, p.R):
        dv, de = p.jet.D(sv)
        chi = p.chi_left(sv) if sv < 0 else p.chi_right(sv)
        aff = p.m * sv + (-p.c_tau if sv < 0 else p.c_tau)
        out.append(_check("continuity_R", n, abs(dv + chi - aff), de + p.R * tol, "<="))
    for sgn in (-1, 1):
        s = p.tau if sgn > 0 else p.tau.negate()
        sc = eval_base(s)
        tv = s.materialize()
        if tv is None:
            aff_err = abs(p.m) * s.magnitude_bound() + p.c_tau_err
            diff, allow = abs(p.alpha * sc.value), aff_err + abs(p.alpha) * sc.abs_error
        else:
            aff = p.m * tv + sgn * p.c_tau
            diff = abs(p.alpha * sc.value - aff)
            allow = abs(p.alpha) * sc.abs_error + p.c_tau_err + abs(tv) * tol
        out.append(_check("continuity_tau", n, diff, allow, "<="))
    gnorm = max(abs(p.delta_l), abs(p.d_l), abs(p.delta_r), abs(p.d_r))
    out.append(_check("g_sup", n, gnorm, 24 * p.R / p.T + st.K * p.R, "<="))
    gp = max(4 * abs(p.d_l) / p.T, 4 * abs(p.d_r) / p.T,
             abs(p.delta_l) / (p.T / 2 - p.R), abs(p.delta_r) / (p.T / 2 - p.R))
    out.append(_check("g_prime", n, gp, mpf(2) ** -n))
    out.append(_check("chi_left_end", n, abs(p.chi_left(-p.T)), 0, "<="))
    scale = abs(p.c_l) + abs(p.d_l) * p.T + abs(p.delta_l) * p.T
    out.append(_check("intgl_left", n, abs(p.chi_left(-p.R) - p.c_l), scale * tol, "<="))
    scale = abs(p.c_r) + abs(p.d_r) * p.T + abs(p.delta_r) * p.T
    out.append(_check("chi_right_end", n, abs(p.chi_right(p.T)), scale * tol, "<="))
    return out


# ------------------------------------------------------------ the proxy w_N


Point = Union[Real, tuple]


@dataclass(frozen=True)
class Construction:
    __repr__ = compact_repr
    schedule: ConstructionSchedule
    profiles: tuple[StageProfile, ...]

    @property
    def depth(self) -> int:
        return self.schedule.depth

    @property
    def prec(self) -> int:
        return self.schedule.prec

    def _depth(self, depth):
        k = self.depth if depth is None else depth
        if not 0 <= k <= self.depth:
            raise ValueError(f"depth {k} not built (0..{self.depth})")
        return k

    def locate(self, t: Real, depth: int | None = None) -> tuple[int, Offset]:
        """Anchored coordinates of a global point: (i, t - x_i) if t in some Y_i, else (0, t)."""
        k = self._depth(depth)
        with mp.workprec(self.prec):
            t = mpf(t)
            if abs(t) > half_width() * (1 + mpf(2) ** -100):
                raise DomainError("t outside [-T, T]")
            for i in range(1, k + 1):
                d = t - self.schedule.anchors[i]
                if abs(d) < self.schedule.stages[i].T:
                    return i, Offset.plain(d)
            return 0, Offset.plain(t)

    def increment(self, anchor: int, s: Real | Offset, depth: int | None = None) -> GuardedValue:
        """w_k(x_j + s) - w_k(x_j)."""
        k = self._depth(depth)
        with mp.workprec(self.prec):
            s = as_offset(s)
            x = self.schedule.anchors[anchor]
            if anchor == 0:
                if s.is_theta:
                    return self.profiles[0].increment(s)
                return self.eval_w(s.sign * s.magnitude, k)
            st = self.schedule.stages[anchor]
            inside = s.is_theta or s.magnitude < st.T
            if inside and anchor <= k:
                return self.profiles[anchor].increment(s)
            if s.is_theta or s.magnitude < abs(x) * mpf(2) ** -40:
                jet = self.profiles[anchor].jet if anchor < len(self.profiles) else LocalJet.at(x, st.T)
                sv = s.materialize()
                if sv is None:
                    return GuardedValue(mpf(0), 2 * s.magnitude_bound())
                v, e = jet.D(sv)
                return GuardedValue(v, e)
            full = self.eval_w(x + s.sign * s.magnitude, k)
            base = self.profiles[anchor].beta
            return GuardedValue(full.value - base, full.abs_error + abs(base) * eps())

    def slope(self, anchor: int, s: Real | Offset, depth: int | None = None) -> GuardedValue:
        """w_k'(x_j + s)."""
        k = self._depth(depth)
        with mp.workprec(self.prec):
            s = as_offset(s)
            if anchor == 0 and not s.is_theta:
                return self.eval_w_prime(s.sign * s.magnitude, k)
            if anchor == 0:
                return self.profiles[0].derivative(s)
            st = self.schedule.stages[anchor]
            if (s.is_theta or s.magnitude < st.T) and anchor <= k:
                return self.profiles[anchor].derivative(s)
            if s.is_zero:
                return self.eval_w_prime(self.schedule.anchors[anchor], k)
            if s.is_theta or s.magnitude < abs(st.x) * mpf(2) ** -40:
                sv = s.materialize()
                jet = self.profiles[anchor].jet
                if sv is None:
                    return GuardedValue(jet.slope, abs(jet.curv) * s.magnitude_bound() * 2)
                v, e = jet.dD(sv)
                return GuardedValue(v, e)
            return self.eval_w_prime(st.x + s.sign * s.magnitude, k)

    def eval_w(self, t: Point, depth: int | None = None) -> GuardedValue:
        """w_k at a global point t or an anchored point (j, offset).

        abs_error carries rounding plus, for k < N, the distance 20 R_{k+1}
        to the final proxy w_N.
        """
        k = self._depth(depth)
        with mp.workprec(self.prec):
            tail = self.schedule.tail(k)
            if isinstance(t, tuple):
                j, s = t
                inc = self.increment(j, s, k)
                base = self.profiles[j].beta if j < len(self.profiles) else eval_base(self.schedule.anchors[j]).value
                return GuardedValue(base + inc.value, inc.abs_error + abs(base) * eps() + tail)
            j, s = self.locate(t, k)
            if j == 0:
                b = eval_base(s)
                return GuardedValue(b.value, b.abs_error + tail)
            inc = self.profiles[j].increment(s)
            base = self.profiles[j].beta
            return GuardedValue(base + inc.value, inc.abs_error + abs(base) * eps() + tail)

    def eval_w_prime(self, t: Point, depth: int | None = None) -> GuardedValue:
        k = self._depth(depth)
        with mp.workprec(self.prec):
            if isinstance(t, tuple):
                return self.slope(t[0], t[1], k)
            j, s = self.locate(t, k)
            if s.is_zero or any(mpf(t) == x for x in self.schedule.anchors[: k + 1]):
                raise DomainError("w' is undefined at an anchor")
            if j == 0:
                return eval_base_d1(s)
            return self.profiles[j].derivative(s)

    def value_at_anchor(self, j: int) -> mpf:
        return self.profiles[j].beta


def build_construction(anchors: Sequence[Real] | None = None, depth: int = 6, prec: int = DEFAULT_PREC,
                       samples: int = 10_000) -> Construction:
    sched = build_schedule(anchors, depth, prec, samples)
    profiles = [stage_zero(sched)]
    for n in range(1, depth + 1):
        profiles.append(build_stage(sched, n, profiles[-1]))
    return Construction(sched, tuple(profiles))


def eval_w(con: Construction, t: Point, depth: int | None = None) -> GuardedValue:
    return con.eval_w(t, depth)


def eval_w_prime(con: Construction, t: Point, depth: int | None = None) -> GuardedValue:
    return con.eval_w_prime(t, depth)
