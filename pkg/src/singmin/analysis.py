"""Dini-derivative probes at anchors, Sigma_k membership, Lipschitz scans and
audits of the inequalities used in the minimality argument.

Anchored quantities are handled in offset coordinates s = t - x_n.  For
n >= 1 every interesting scale lies inside Y_n (radius T_n), far below double
range, so local competitors are described analytically (`AnchoredTrial`) and
integrals are taken in the scaled variable sigma = s / c.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from mpmath import mp, mpf

from .construction import StageProfile
from .functional import Problem, TrialFunction
from .special_functions import (
    T_FLOAT,
    DomainError,
    Offset,
    base_correction,
    compact_repr,
    eval_base_d1,
    fmt,
    magnitude_bound_from_theta,
    theta_of,
)

# ------------------------------------------------------------------ Dini probes


@dataclass
class DiniProbeReport:
    __repr__ = compact_repr
    n: int
    alpha: mpf
    theta_tau: mpf
    theta_plus: mpf
    theta_minus: mpf
    quotient_plus: mpf
    quotient_minus: mpf
    residual: mpf  # max |quotient_+- -+ alpha|
    plain_samples: list = field(default_factory=list)  # (offset, quotient, closed_form, perturbation_bound)

    def as_dict(self) -> dict:
        return {
            "n": self.n, "alpha": float(self.alpha), "theta_tau": float(self.theta_tau),
            "theta_plus": float(self.theta_plus), "theta_minus": float(self.theta_minus),
            "quotient_plus": float(self.quotient_plus), "quotient_minus": float(self.quotient_minus),
            "residual": float(self.residual),
            "plain_samples": [
                {"offset": float(o), "quotient": float(q), "closed_form": None if c is None else float(c),
                 "perturbation_bound": None if b is None else float(b)}
                for o, q, c, b in self.plain_samples
            ],
        }


def _next_theta(theta0: mpf, base: mpf) -> mpf:
    k = mp.ceil((theta0 - base) / (2 * mp.pi))
    return base + 2 * mp.pi * k


def _perturbation_bound(problem: Problem, n: int, s: mpf, N: int):
    """2^-m for the largest m with |s| < T_m (m > n), else None."""
    best = None
    for m in range(n + 1, N + 1):
        if abs(s) < problem.schedule.stages[m].T:
            best = mpf(2) ** -m
    return best


def dini_probe(problem: Problem, n: int, N: int | None = None, offsets=(1e-300, 1e-100, 1e-20, 1e-8)) -> DiniProbeReport:
    """Closed-form witnesses of the upper/lower Dini derivatives of w at x_n."""
    N = problem.depth if N is None else N
    if not 0 <= n <= N:
        raise ValueError(f"anchor {n} not built at depth {N}")
    con = problem.construction
    prof = con.profiles[n]
    with mp.workprec(problem.schedule.prec):
        th_tau = prof.theta_tau
        tp = _next_theta(th_tau, mp.pi / 2)
        tm = _next_theta(th_tau, 3 * mp.pi / 2)
        for th in (tp, tm):  # probes lie in the scaled branch
            if prof.region(Offset.from_theta(th)) != "scaled":
                raise RuntimeError("probe outside the scaled branch")
        qp, qm = prof.alpha * mp.sin(tp), prof.alpha * mp.sin(tm)
        res = max(abs(qp - prof.alpha), abs(qm + prof.alpha))
        samples = []
        for o in offsets:
            s = mpf(o)
            inc = con.increment(n, Offset.plain(s), N)
            q = inc.value / s
            reg = prof.region(Offset.plain(s))
            if reg == "scaled" or n == 0:
                closed = prof.alpha * mp.sin(theta_of(s))
            elif reg == "outside":
                # w is w~ near x_n beyond Y_n: the quotient tends to w~'(x_n)
                closed = eval_base_d1(prof.x).value
            else:
                closed = None
            samples.append((s, q, closed, _perturbation_bound(problem, n, s, N)))
        return DiniProbeReport(n, prof.alpha, th_tau, tp, tm, qp, qm, res, samples)


# ------------------------------------------------------------------ Sigma_k^{+-}


@dataclass
class SigmaReport:
    __repr__ = compact_repr
    t: object
    k: int
    plus: bool | None  # None: not decided by the sampled search
    minus: bool | None
    margin_plus: float
    margin_minus: float
    witness_plus: object = None
    witness_minus: object = None
    method: str = ""


def _anchor_index(problem: Problem, t, N: int) -> int | None:
    if isinstance(t, tuple):
        return t[0] if t[1] in (0, None) or (isinstance(t[1], Offset) and t[1].is_zero) else None
    with mp.workprec(problem.schedule.prec):
        tv = mpf(t)
        for i, x in enumerate(problem.schedule.anchors[: N + 1]):
            if tv == x:
                return i
    return None


def sigma_membership(problem: Problem, t, k: int, N: int | None = None, samples: int = 400) -> SigmaReport:
    """Whether some s has |(w(s) - w(t))/(s - t) -+ 1| < 1/k (and |s - t| < 1/k)."""
    N = problem.depth if N is None else N
    if k < 1:
        raise ValueError("k >= 1")
    j = _anchor_index(problem, t, N)
    if j is not None:
        prof = problem.construction.profiles[j]
        with mp.workprec(problem.schedule.prec):
            out = {}
            for sgn in (1, -1):
                # alpha sin(theta) = sgn with theta >= theta_tau (|alpha| >= 1)
                a = mp.asin(sgn / prof.alpha)
                th = _next_theta(prof.theta_tau, a)
                q = prof.alpha * mp.sin(th)
                out[sgn] = (th, abs(q - sgn))
            ok = lambda m: bool(m < mpf(1) / k)  # noqa: E731
            return SigmaReport(t, k, ok(out[1][1]), ok(out[-1][1]), float(out[1][1]), float(out[-1][1]),
                               Offset.from_theta(out[1][0]), Offset.from_theta(out[-1][0]), "closed-form witness")
    # semi-decision at a non-anchor: sampled quotients at double scale
    t0 = float(t)
    if not -T_FLOAT < t0 < T_FLOAT:
        raise DomainError("t must lie in (-T, T)")
    h = np.geomspace(1e-14, min(1.0 / k, T_FLOAT), samples)
    s = np.concatenate([t0 + h, t0 - h])
    s = s[(s > -T_FLOAT) & (s < T_FLOAT) & (s != t0)]
    q = (problem.w_double(s) - problem.w_double(np.array([t0]))[0]) / (s - t0)
    mp_, mm = np.abs(q - 1), np.abs(q + 1)
    ip, im = int(np.argmin(mp_)), int(np.argmin(mm))
    plus = True if mp_[ip] < 1.0 / k else None
    minus = True if mm[im] < 1.0 / k else None
    return SigmaReport(t, k, plus, minus, float(mp_[ip]), float(mm[im]), float(s[ip]), float(s[im]), "sampled search")


# ------------------------------------------------------------------ Lipschitz


def lipschitz_scan(f: Callable, windows=(1e-2, 1e-4, 1e-6, 1e-9), samples: int = 2000, seed: int = 0,
                   lo: float = -T_FLOAT, hi: float = T_FLOAT) -> float:
    """max |f(t+d) - f(t)| / d over random t and each window d."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for d in windows:
        t = rng.uniform(lo, hi - d, samples)
        q = np.abs((np.asarray(f(t + d)) - np.asarray(f(t))) / d)
        best = max(best, float(np.max(q)))
    return best


def anchored_quotients(problem: Problem, n: int, N: int | None = None, samples: int = 60) -> mpf:
    """max |w_N(x_n+s1) - w_N(x_n+s2)| / |s1 - s2| over offsets spanning every branch of stage n."""
    N = problem.depth if N is None else N
    con = problem.construction
    with mp.workprec(problem.schedule.prec):
        st = problem.schedule.stages[n]
        lo = theta_of(st.T) + mpf("0.01")
        hi = con.profiles[n].theta_tau + 3
        offs = []
        for i in range(samples):
            th = lo + (hi - lo) * i / (samples - 1)
            mag = _theta_mag(th)
            offs += [mag, -mag]
        # plain grid across the cut-off region
        offs += [st.T * mpf(k) / 16 for k in range(-15, 16) if k]
        offs = sorted(set(offs))
        vals = [con.increment(n, Offset.plain(s), N).value for s in offs]
        best = mpf(0)
        for (s1, v1), (s2, v2) in zip(zip(offs, vals), zip(offs[1:], vals[1:])):
            best = max(best, abs(v2 - v1) / (s2 - s1))
        # pairs straddling the anchor
        for s, v in zip(offs, vals):
            best = max(best, abs(v / s))
        return best


def _theta_mag(theta: mpf) -> mpf:
    """|s| = exp(-exp(exp(theta))) rounded at working precision (cheap at any theta)."""
    return mp.exp(-mp.exp(mp.exp(theta)))


# ------------------------------------------------------------------ competitors for the audit


class LocalTrial:
    """u near x_n in offsets: U(s) = u(x_n + s) - w(x_n), with derivative dU."""

    n: int
    support: mpf

    def U(self, s: mpf) -> mpf:
        raise NotImplementedError

    def dU(self, s: mpf) -> mpf:
        raise NotImplementedError

    def breaks(self, lo: mpf, hi: mpf) -> list:
        """Offsets in (lo, hi) where U' may jump."""
        return []


class PlainTrial(LocalTrial):
    """A TrialFunction read around anchor x_n at double resolution."""

    def __init__(self, problem: Problem, u: TrialFunction, n: int):
        self.problem, self.u, self.n = problem, u, n
        self.x = float(problem.schedule.anchors[n])
        self.wx = float(problem.construction.value_at_anchor(n))
        self.support = mpf(2 * T_FLOAT)

    def U(self, s):
        return mpf(float(self.u(self.x + float(s)))) - self.wx

    def dU(self, s):
        return mpf(self.u.slope_at(self.x + float(s)))

    def breaks(self, lo, hi):
        k = self.u.nodes - self.x
        return [mpf(float(v)) for v in k[(k > float(lo)) & (k < float(hi))]]


class AnchoredTrial(LocalTrial):
    """w plus a plateau at x_n: U = max(I, min(h, h(1 + kappa/3) - kappa |s|)) for h > 0
    (mirrored for h < 0), where I is the increment of w_n.  J_n = (-|h|/3, |h|/3)
    and u is constant there.
    """

    def __init__(self, problem: Problem, n: int, h, kappa=2):
        self.problem, self.n = problem, n
        with mp.workprec(problem.schedule.prec):
            self.h, self.kappa = mpf(h), mpf(kappa)
            self.prof: StageProfile = problem.construction.profiles[n]
            st = problem.schedule.stages[n]
            if not abs(self.h) <= mpf("0.35") * st.T:
                raise ValueError("plateau height must satisfy |h| <= 0.35 T_n")
            self.support = abs(self.h) * (1 + self.kappa / 3) / (self.kappa - 2) if self.kappa > 2 else 2 * abs(self.h) * (1 + self.kappa / 3)

    def breaks(self, lo, hi):
        a = abs(self.h) / 3
        return [v for v in (-a, a) if lo < v < hi]

    def _I(self, s: mpf) -> mpf:
        return self.prof.increment(Offset.plain(s)).value if s != 0 else mpf(0)

    def _tent(self, s: mpf) -> mpf:
        a = abs(self.h)
        return min(a, a * (1 + self.kappa / 3) - self.kappa * abs(s))

    def U(self, s):
        s = mpf(s)
        if self.h > 0:
            return max(self._I(s), self._tent(s))
        return min(self._I(s), -self._tent(s))

    def dU(self, s):
        s = mpf(s)
        i, tent = self._I(s), self._tent(s)
        on_tent = tent >= i if self.h > 0 else -tent <= i
        if not on_tent:
            return self.prof.derivative(Offset.plain(s)).value
        if abs(s) < abs(self.h) / 3:
            return mpf(0)
        slope = -self.kappa if s > 0 else self.kappa
        return slope if self.h > 0 else -slope


def plateau_competitor(problem: Problem, h: float, M: int = 2048, kappa: float = 2.0) -> TrialFunction:
    """Plain analogue of AnchoredTrial at x_0 as a grid function (n = 0)."""
    a = abs(h)
    kinks = [-a / 3, a / 3, -a * (1 + kappa / 3) / kappa, a * (1 + kappa / 3) / kappa, 0.0]
    t = np.unique(np.concatenate([np.linspace(-T_FLOAT, T_FLOAT, M + 1), kinks]))
    w = problem.w_double(t)
    tent = np.minimum(a, a * (1 + kappa / 3) - kappa * np.abs(t))
    v = np.maximum(w, tent) if h > 0 else np.minimum(w, -tent)
    v[0], v[-1] = problem.boundary()
    return TrialFunction(t, v, f"plateau h={h:.3g}")


def lifted_competitor(problem: Problem, height: float, M: int = 2048) -> TrialFunction:
    """w + height, clipped to the 2-Lipschitz cone through the boundary values (height > 0)."""
    t = np.linspace(-T_FLOAT, T_FLOAT, M + 1)
    t = np.unique(np.concatenate([t, [0.0]]))
    a, b = problem.boundary()
    cone = np.minimum(a + 2 * (t + T_FLOAT), b + 2 * (T_FLOAT - t))
    w = problem.w_double(t)
    v = np.maximum(w, np.minimum(w + height, cone))
    v[0], v[-1] = a, b
    return TrialFunction(t, v, f"lifted {height:.3g}")


# ------------------------------------------------------------------ the audit


@dataclass
class Check:
    __repr__ = compact_repr
    name: str
    lhs: mpf
    rhs: mpf
    passed: bool
    margin: float  # relative: (rhs - lhs)/|rhs| for '<', (lhs - rhs)/|rhs| for '>='
    note: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs": fmt(self.lhs), "rhs": fmt(self.rhs), "passed": self.passed,
                "margin": self.margin, "note": self.note}


@dataclass
class CompetitorAudit:
    __repr__ = compact_repr
    n: int
    J: tuple | None  # (x_n - a_n, x_n + b_n) as offsets (a, b)
    c: mpf | None
    d: object  # H_n half width: mpf or theta Offset
    H: tuple | None
    I_l: mpf | None = None
    I_r: mpf | None = None
    E_l: mpf | None = None
    E_r: mpf | None = None
    checks: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        f = lambda x: None if x is None else fmt(x)  # noqa: E731
        d = self.d
        return {
            "n": self.n, "J": None if self.J is None else [f(-self.J[0]), f(self.J[1])], "c": f(self.c),
            "d": None if d is None else (f"theta={fmt(d.theta)}" if d.is_theta else fmt(d.magnitude)),
            "I_l": f(self.I_l), "I_r": f(self.I_r), "E_l": f(self.E_l), "E_r": f(self.E_r),
            "passed": self.passed, "checks": [c.as_dict() for c in self.checks], "skipped": list(self.skipped),
        }

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _ge(name, lhs, rhs, note="") -> Check:
    lhs, rhs = mpf(lhs), mpf(rhs)
    m = (lhs - rhs) / abs(rhs) if rhs else lhs - rhs
    return Check(name, lhs, rhs, bool(lhs >= rhs), float(m), note)


def _lt(name, lhs, rhs, note="") -> Check:
    lhs, rhs = mpf(lhs), mpf(rhs)
    m = (rhs - lhs) / abs(rhs) if rhs else rhs - lhs
    return Check(name, lhs, rhs, bool(lhs < rhs), float(m), note)


def _edge(f, lo: mpf, hi: mpf, steps: int = 400) -> mpf:
    """First s in (lo, hi] where f(s) <= 0 (f(lo) > 0), refined by bisection."""
    a = lo
    for i in range(1, steps + 1):
        b = lo + (hi - lo) * i / steps
        if f(b) <= 0:
            for _ in range(mp.prec):
                mid = (a + b) / 2
                if mid in (a, b):
                    break
                if f(mid) > 0:
                    a = mid
                else:
                    b = mid
            return b
        a = b
    raise RuntimeError("J_n does not close inside the searched range")


def audit_competitor(problem: Problem, trial: LocalTrial, N: int | None = None, envelope_samples: int = 400) -> CompetitorAudit:
    """J_n, c_n, H_n, boundary terms and the inequality audits at anchor trial.n."""
    N = problem.depth if N is None else N
    n = trial.n
    prof = problem.construction.profiles[n]
    st = problem.schedule.stages[n]
    with mp.workprec(problem.schedule.prec):
        I = lambda s: prof.increment(Offset.plain(s)).value if s != 0 else mpf(0)  # noqa: E731
        v = lambda s: trial.U(s) - I(s)  # noqa: E731  v_n(x_n + s)
        U0 = trial.U(mpf(0))
        audit = CompetitorAudit(n, None, None, None, None)
        if U0 == 0:
            audit.skipped.append("u(x_n) = w(x_n): J_n empty; only the off-J envelope is checked")
            a = b = mpf(0)
        else:
            span = min(trial.support, 2 * st.T if n else mpf(2 * T_FLOAT))
            b = _edge(lambda s: abs(trial.U(s)) - 3 * s, mpf(0), span)
            a = _edge(lambda s: abs(trial.U(-s)) - 3 * s, mpf(0), span)
            c = max(a, b)
            audit.J, audit.c = (a, b), c
        # envelope |v_i| < 5|s| off J_n (v_i = v_n at every representable offset)
        S = min(trial.support * 2, st.T if n else mpf(2 * T_FLOAT))
        worst = mpf(-1)
        for i in range(1, envelope_samples + 1):
            for sgn in (1, -1):
                s = sgn * (max(a, b) + (S - max(a, b)) * mpf(i) / envelope_samples)
                if (sgn > 0 and s <= b) or (sgn < 0 and -s <= a):
                    continue
                if n == 0 and not -T_FLOAT <= float(s) <= T_FLOAT:
                    continue
                worst = max(worst, abs(v(s)) / (5 * abs(s)))
        audit.checks.append(_lt("envelope", worst, 1, "max |v|/(5|t - x_n|) off J_n"))
        if U0 == 0:
            return audit
        c = audit.c
        # upsilon2: |v| >= b on [x_n, x_n + b] and >= a on [x_n - a, x_n]
        lows = [abs(v(b * k / 64)) / b for k in range(1, 65)] + [abs(v(-a * k / 64)) / a for k in range(1, 65)]
        audit.checks.append(_ge("upsilon2", min(lows), 1, "min |v|/b on [x, x+b], |v|/a on [x-a, x]"))
        # |u'| <= 2 on J_n
        slopes = [abs(trial.dU(s)) for s in [b * k / 65 for k in range(1, 65)] + [-a * k / 65 for k in range(1, 65)]]
        audit.checks.append(_lt("lip_on_J", max(slopes), 2 + mpf(2) ** -40, "|u'| <= 2 on J_n"))
        # needs J~ inside Y_n
        if n == 0 or c < st.T:
            val, err = _phi1_integral(trial, I, c)
            L1c = -mp.log(c)
            bound = 201 * c / mp.log(L1c)
            audit.checks.append(_ge("phi_mass", val - err, bound, "int phi~^1(t, v_n) over J~_n"))
        else:
            audit.skipped.append("phi_mass: J~_n not inside Y_n")
        # H_n, d_n and the boundary terms
        tau = prof.tau
        if n == 0 or theta_of(c) >= prof.theta_tau:
            d = Offset.plain(c)
        else:
            d = tau
        audit.d = d
        _boundary_terms(audit, prof, trial, d, I, c)
        return audit


def _phi1_integral(trial: LocalTrial, I, c: mpf) -> tuple[mpf, mpf]:
    """int_{-c}^{c} psi^1(s) min(|v|, 5|s|) ds, computed as c * int over sigma in [-1, 1]."""
    L1c = -mp.log(c)
    ln5 = mp.log(5)

    def g(sig):
        if sig == 0:
            return mpf(0)
        s = c * sig
        l1 = L1c - mp.log(abs(sig))
        vv = abs(trial.U(s) - I(s))
        return 402 / mp.log(l1 - ln5) * min(vv / abs(s), mpf(5))

    pts = _sigma_points(trial, c, 8)
    with mp.workprec(max(mp.prec, 64)):
        val, err = mp.quad(g, pts, error=True, **_rule(pts))
    return c * val, c * err + c * mpf(2) ** (-mp.prec + 20) * abs(val)


def _sigma_points(trial: LocalTrial, c: mpf, k: int) -> list:
    pts = {mpf(i) / k for i in range(-k, k + 1)}
    pts |= {b / c for b in trial.breaks(-c, c)}
    return sorted(pts)


def _rule(pts: list) -> dict:
    # many kinks: each piece is smooth, so a short Gauss-Legendre rule suffices
    if len(pts) > 40:
        return {"method": "gauss-legendre", "maxdegree": 3}
    return {"maxdegree": 6}


def _boundary_terms(audit: CompetitorAudit, prof: StageProfile, trial: LocalTrial, d: Offset, I, c: mpf) -> None:
    alpha = prof.alpha
    l1, l2, th = d.logs()
    lt = mp.sin(th)  # l~' = sin log log log 1/d
    lp = alpha * lt
    wp = alpha * eval_base_d1(d).value  # w_n'(x_n +- d), even
    gap = abs(alpha * base_correction(l1, l2, th))  # |l_n' - w_n'(+-d)| without cancellation
    if not d.is_theta:
        dv = d.magnitude
        vl, vr = trial.U(-dv) - I(-dv), trial.U(dv) - I(dv)
        audit.H = (-dv, dv)
        audit.I_l, audit.I_r = lp * vl, lp * vr
        audit.E_l, audit.E_r = wp * vl, wp * vr
        lhs35 = gap * (abs(vl) + abs(vr))
    else:
        # d = tau_n below materialization: |v(+-d)| <= |U(0)| + 4|d| (both slopes <= 2)
        db = magnitude_bound_from_theta(d.theta)
        vb = abs(trial.U(mpf(0))) + 4 * db
        audit.H = (d.negate(), d)
        lhs35 = 2 * gap * vb
    rhs35 = 20 * c / (-mp.log(c) * mp.log(-mp.log(c)))
    audit.checks.append(_lt("endpoint_drift", lhs35, rhs35, "|I_r - E_r| + |I_l - E_l|"))
    # int_H (u'^2 - w_n'^2) > 2(I_r - I_l) - 160 d / log log(1/d), scaled by d
    lhs, rhs = _energy_excess_scaled(prof, trial, d, lp, I)
    audit.checks.append(_ge("energy_excess", lhs, rhs, "scaled by 1/d"))


def _energy_excess_scaled(prof: StageProfile, trial: LocalTrial, d: Offset, lp: mpf, I):
    alpha = prof.alpha
    l1d, l2d, thd = d.logs()

    def wprime_sq(sig):  # w_n'(d sigma)^2 on H_n (scaled branch)
        if sig == 0:
            return mpf(0)
        l1 = l1d - mp.log(abs(sig))
        l2 = mp.log(l1)
        th = mp.log(l2)
        return (alpha * (mp.sin(th) - mp.cos(th) / (l1 * l2))) ** 2

    wsq = mp.quad(wprime_sq, [mpf(k) / 4 for k in range(-4, 5)])
    if d.is_theta:
        # u is affine at scale tau_n (its kinks are representable offsets)
        du = trial.dU(mpf(0))
        usq = 2 * du**2
        u_jump = 2 * du  # (U(d) - U(-d)) / d
        i_jump = 2 * alpha * mp.sin(thd)  # (I(d) - I(-d)) / d = 2 alpha sin(theta_d)
    else:
        dv = d.magnitude
        pts = _sigma_points(trial, dv, 4)
        usq = mp.quad(lambda sig: trial.dU(dv * sig) ** 2, pts, **_rule(pts))
        u_jump = (trial.U(dv) - trial.U(-dv)) / dv
        i_jump = (I(dv) - I(-dv)) / dv
    lhs = usq - wsq
    rhs = 2 * lp * (u_jump - i_jump) - 160 / l2d
    return lhs, rhs
