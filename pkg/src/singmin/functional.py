"""The Lagrangian L(t, y, p) = p^2 + phi(t, y - w(t)), the functionals
L(u) = int L(t, u, u') and L_n(u) = int p^2 + phi(t, u - w_n), and the
approximation-jump check between them.

Resolution split used throughout: every stage n >= 1 modifies w and phi
only on Y_n, whose radius T_n lies far below double spacing.  At any double
t the proxies w_N and w~ coincide, phi~_0 is evaluated exactly, and the
stages n >= 1 contribute the frozen constant kappa_n wherever u != w.  What
happens inside the Y_n is bounded analytically from the certified schedule
and reported as `singular_interval_bound`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from mpmath import mp, mpf

from . import kernels
from .construction import Construction
from .special_functions import T_FLOAT, DomainError, GuardedValue, compact_repr, half_width
from .weight import WeightFunction


def up(x) -> float:
    """Smallest double >= x (keeps astronomically small bounds nonzero)."""
    x = mpf(x)
    f = float(x)
    if mpf(f) < x:
        f = math.nextafter(f, math.inf)
    return f


@dataclass(frozen=True)
class QuadOptions:
    tol: float = 1e-10
    max_depth: int = 40
    sliver_cutoff: float = 1e-30


@dataclass
class Problem:
    """A built construction with its weight; shared by functional/solver/analysis."""

    __repr__ = compact_repr

    construction: Construction
    weight: WeightFunction = None

    def __post_init__(self):
        if self.weight is None:
            self.weight = WeightFunction(self.construction.schedule)

    @property
    def schedule(self):
        return self.construction.schedule

    @property
    def depth(self) -> int:
        return self.construction.depth

    @property
    def C(self) -> float:
        return float(self.schedule.C)

    @property
    def anchors_double(self) -> np.ndarray:
        return np.array([float(x) for x in self.schedule.anchors])

    def w_double(self, t) -> np.ndarray:
        """w_N at double t (equal to w~ there, see module docstring)."""
        return kernels.base(t)

    def w_prime_double(self, t) -> np.ndarray:
        return kernels.base_d1(t)

    def boundary(self) -> tuple[float, float]:
        return float(self.construction.eval_w(-T_FLOAT).value), float(self.construction.eval_w(T_FLOAT).value)

    def subresolution_measure(self, lo: int = 1, hi: int | None = None) -> mpf:
        """meas(Y_lo u ... u Y_hi)."""
        hi = self.depth if hi is None else hi
        with mp.workprec(self.schedule.prec):
            return sum((2 * self.schedule.stages[i].T for i in range(lo, hi + 1)), mpf(0))


@dataclass
class TrialFunction:
    """Piecewise-linear u on nodes -T = t_0 < ... < t_M = T."""

    nodes: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.shape != self.values.shape or self.nodes.size < 2:
            raise ValueError("nodes and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")

    @classmethod
    def interpolate(cls, f, M: int, label: str = "") -> "TrialFunction":
        """Interpolant of f on M uniform nodes."""
        t = np.linspace(-T_FLOAT, T_FLOAT, M)
        return cls(t, np.asarray(f(t), dtype=float), label)

    def __call__(self, t) -> np.ndarray:
        return np.interp(t, self.nodes, self.values)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.nodes)

    def slope_at(self, t: float) -> float:
        k = int(np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, self.nodes.size - 2))
        return float(self.slopes[k])

    def kinetic(self) -> float:
        return math.fsum(np.diff(self.values) ** 2 / np.diff(self.nodes))


@dataclass
class FunctionalValue:
    __repr__ = compact_repr
    value: float
    quad_error: float
    weight_tail_error: float
    singular_interval_bound: float
    kinetic: float = 0.0
    potential: float = 0.0  # int phi~_0(t, u - w)
    frozen: float = 0.0  # stages n >= 1 at double scale
    potential_parts: tuple | None = None  # (phi^1, phi^2) split of `potential` when requested
    depth: int = 0
    evaluations: int = 0

    @property
    def total_error(self) -> float:
        return self.quad_error + self.weight_tail_error + self.singular_interval_bound

    @property
    def basic(self) -> float:
        """Kinetic plus the phi~_0 part only."""
        return self.kinetic + self.potential

    def as_dict(self) -> dict:
        d = {
            "value": self.value, "quad_error": self.quad_error, "weight_tail_error": self.weight_tail_error,
            "singular_interval_bound": self.singular_interval_bound, "total_error": self.total_error,
            "kinetic": self.kinetic, "potential": self.potential, "frozen": self.frozen,
        }
        return {**{k: float(v) for k, v in d.items()}, "depth": int(self.depth), "evaluations": int(self.evaluations)}


# ------------------------------------------------------------------ pointwise


def lagrangian(problem: Problem, t, y, p, N: int | None = None) -> GuardedValue:
    """p^2 + phi_N(t, y - w_N(t)) with the combined error of w and phi."""
    N = problem.depth if N is None else N
    w = problem.construction.eval_w(t, N)
    with mp.workprec(problem.schedule.prec):
        p = mpf(p)
        dy = mpf(y) - w.value
        ph = problem.weight.phi(t, dy, N)
        err = ph.abs_error
        if w.abs_error:
            err += problem.weight.variation_y(t, dy, w.abs_error, N)
        return GuardedValue(p * p + ph.value, err)


# ------------------------------------------------------------------ integrals


def _breakpoints(problem: Problem, u: TrialFunction, N: int, cutoff: float) -> np.ndarray:
    pts = [u.nodes]
    T = T_FLOAT
    for x in problem.anchors_double[: N + 1]:
        pts.append(np.array([x]))
    # Y_i, Z_i endpoints round onto the anchors at double resolution; the
    # stage-segment breakpoints of w_n likewise.  The x_0 sliver is explicit.
    pts.append(np.array([-cutoff, cutoff]))
    b = np.unique(np.concatenate(pts))
    return b[(b >= -T) & (b <= T)]


def _pieces(u: TrialFunction, bps: np.ndarray, cutoff: float):
    a, b = bps[:-1], bps[1:]
    mid = 0.5 * (a + b)
    keep = ~((a >= -cutoff) & (b <= cutoff))
    a, b, mid = a[keep], b[keep], mid[keep]
    k = np.clip(np.searchsorted(u.nodes, mid, side="right") - 1, 0, u.nodes.size - 2)
    return np.stack([a, b], 1), u.values[k], u.slopes[k], u.nodes[k]


def potential_integral(problem: Problem, u: TrialFunction, opts: QuadOptions, part: int = 3,
                       N: int | None = None):
    """int phi~_0^part(t, u - w) over [-T, T] minus the x_0 sliver; (value, error, evals)."""
    N = problem.depth if N is None else N
    bps = _breakpoints(problem, u, N, opts.sliver_cutoff)
    pieces, ua, sl, ta = _pieces(u, bps, opts.sliver_cutoff)
    tol = opts.tol / max(1, pieces.shape[0])
    vals, errs, evals = kernels.potential_pieces(pieces, ua, sl, ta, part, tol, opts.max_depth)
    v = math.fsum(vals)
    err = math.fsum(errs) + 4 * np.finfo(float).eps * math.fsum(np.abs(vals)) * max(1.0, math.log2(evals + 1))
    return v, err, evals


def functional(problem: Problem, u: TrialFunction, N: int | None = None, opts: QuadOptions | None = None,
               reference: int | None = None, split: bool = False) -> FunctionalValue:
    """L(u) with the depth-N proxies (reference=None), or L_n(u) (reference=n).

    L_n keeps the full weight phi and swaps w for w_n, which at double
    resolution is the same integrand; only the analytic bound differs.
    """
    opts = opts or QuadOptions()
    N = problem.depth if N is None else N
    if not 0 <= N <= problem.depth:
        raise ValueError(f"depth {N} not built")
    if u.nodes[0] < -T_FLOAT * (1 + 1e-15) or u.nodes[-1] > T_FLOAT * (1 + 1e-15):
        raise DomainError("trial function extends beyond [-T, T]")
    k = N if reference is None else reference
    kin = u.kinetic()
    pot, qerr, evals = potential_integral(problem, u, opts, 3, N)
    parts = None
    if split:
        p1 = potential_integral(problem, u, opts, 1, N)
        p2 = potential_integral(problem, u, opts, 2, N)
        parts = (p1[0], p2[0])
        evals += p1[2] + p2[2]
    span = u.nodes[-1] - u.nodes[0]
    with mp.workprec(problem.schedule.prec):
        frozen = problem.weight.frozen_total(N) * mpf(span)
        C = problem.schedule.C
        sliver = 2 * mpf(opts.sliver_cutoff) * C
        # inside Y_i (i <= N) w_k, phi~_i differ from their double-scale forms by at most 2C
        sub = 2 * C * problem.subresolution_measure(1, max(N, k))
        tail = 2 * half_width() * mpf(2) ** -N
    value = kin + pot + float(frozen)
    qerr += 4 * np.finfo(float).eps * (abs(kin) + abs(value))
    return FunctionalValue(value, qerr, up(tail), up(sliver + sub), kin, pot, float(frozen), parts, N, evals)


@lru_cache(maxsize=4)
def _w_kinetic(prec: int) -> tuple[mpf, mpf]:
    """int_{-T}^{T} w~'(t)^2 dt with an error bound."""
    with mp.workprec(prec):
        T = half_width()
        cut = mpf("1e-300")

        def f(t):
            l1 = -mp.log(t)
            l2 = mp.log(l1)
            th = mp.log(l2)
            return (mp.sin(th) - mp.cos(th) / (l1 * l2)) ** 2

        pts = [cut] + [T * mpf(10) ** -k for k in (300, 200, 150, 100, 70, 50, 35, 25, 18, 12, 8, 5, 3, 2, 1)] + [T]
        pts = sorted(set(p for p in pts if p >= cut))
        v, e = mp.quad(f, pts, error=True)
        # |w~'|^2 <= 1.21 on the excised (0, 1e-300)
        return 2 * v, 2 * (e + mpf("1.21") * cut)


def w_value(problem: Problem, N: int | None = None) -> FunctionalValue:
    """L(w) = int (w')^2 (phi(t, 0) = 0), for the depth-N proxy."""
    N = problem.depth if N is None else N
    v, e = _w_kinetic(max(problem.schedule.prec, 64))
    with mp.workprec(problem.schedule.prec):
        # |w_N'^2 - w~'^2| <= 4 on the Y_i
        sub = 4 * problem.subresolution_measure(1, N)
    return FunctionalValue(float(v), up(e) + 4e-16 * float(v), 0.0, up(sub), float(v), 0.0, 0.0, None, N, 0)


def w_interpolant(problem: Problem, M: int) -> TrialFunction:
    u = TrialFunction.interpolate(problem.w_double, M, f"w-interpolant M={M}")
    u.values[0], u.values[-1] = problem.boundary()
    return u


# ------------------------------------------------------------------ jump check


@dataclass
class JumpReport:
    __repr__ = compact_repr
    n: int
    N: int
    diff_full: float  # L(u) - L(w)
    diff_stage: float  # L_n(u) - L_n(w_n)
    gap: float
    error_bar: float
    analytic_bound: mpf  # certified sub-resolution bound for the gap
    threshold: mpf  # T_{n+1}^2 / 2
    passed: bool
    margin: mpf = field(default=mpf(0))

    @property
    def relative_margin(self) -> float:
        return float(self.margin / self.threshold)


def _jump_bound(problem: Problem, n: int, N: int) -> mpf:
    """Bound on |(L(u)-L(w)) - (L_n(u)-L_n(w_n))| from the certified schedule.

    Potential: w and w_n differ only on the Y_i (i > n) by < 10 R_i each;
    off G_n the y-Lipschitz constant of phi is <= M_n, on G_n the change is <= 2C.
    Kinetic: |w_n' - w'| < T_i^2/128 on Y_i minus Z_i and <= 4 on Z_i,
    and |(w')^2 - (w_n')^2| <= 4 |w' - w_n'|.
    """
    s = problem.schedule
    with mp.workprec(s.prec):
        st = s.stages[n]
        dw = sum((10 * s.stages[i].R for i in range(n + 1, N + 1)), mpf(0))
        meas_y = problem.subresolution_measure(n + 1, N)
        G_meas = 2 * st.G_radius * st.G_count if st.G_radius is not None else mpf(0)
        pot = st.M * dw * meas_y + 2 * s.C * min(G_meas, meas_y) if st.M is not None else mpf(0)
        slope_gap = sum((s.stages[i].T ** 2 / 128 for i in range(n + 1, N + 1)), mpf(0))
        z_meas = sum((2 * s.stages[i].R for i in range(n + 1, N + 1)), mpf(0))
        kin = meas_y * slope_gap + 4 * z_meas
        return pot + 4 * kin


def approx_jump_check(problem: Problem, u: TrialFunction, n: int, N: int | None = None,
                      opts: QuadOptions | None = None) -> JumpReport:
    N = problem.depth if N is None else N
    if not 0 <= n < N:
        raise ValueError("need 0 <= n < N")
    Fu = functional(problem, u, N, opts)
    Fw = w_value(problem, N)
    Fu_n = functional(problem, u, N, opts, reference=n)
    Fw_n = w_value(problem, n)
    d_full = Fu.value - Fw.value
    d_stage = Fu_n.value - Fw_n.value
    gap = abs(d_full - d_stage)
    # the two quadratures are the same computation, so only rounding separates them
    bar = 4 * np.finfo(float).eps * (abs(Fu.value) + abs(Fw.value))
    bound = _jump_bound(problem, n, N)
    with mp.workprec(problem.schedule.prec):
        thr = problem.schedule.stages[n + 1].T ** 2 / 2
        margin = thr - bound
        ok = bound < thr and gap <= bar
    return JumpReport(n, N, d_full, d_stage, gap, bar, bound, thr, bool(ok), margin)
