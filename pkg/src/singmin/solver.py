"""Direct-method minimization over piecewise-linear trial functions and a
generator of competitor functions.

The discrete energy is sum (du)^2/h plus a fixed Gauss-Legendre rule for
int phi~_0(t, u - w) on each element; the frozen stage constants do not depend
on u (away from u = w) and are added back when the certified value is computed
with `functional`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .functional import FunctionalValue, Problem, QuadOptions, TrialFunction, functional, w_interpolant
from .special_functions import T_FLOAT


@dataclass(frozen=True)
class SolveOptions:
    quad_points: int = 8
    radius: float = 1e-2
    min_radius: float = 1e-12
    golden_iters: int = 40
    max_sweeps: int = 600
    accept: float = 1e-15  # per-node decrease must beat this (absolute)
    workers: int = 1


@dataclass
class StartResult:
    index: int
    label: str
    sweeps: int
    trace: list
    final: TrialFunction
    value: FunctionalValue
    sup_distance: float


@dataclass
class SolveReport:
    best: TrialFunction
    value: FunctionalValue
    starts: int
    iterations: list
    sup_distance: float
    traces: list
    results: list = field(repr=False, default_factory=list)
    grid: int = 0
    seed: int = 0

    def to_rows(self) -> list[dict]:
        return [{
            "start": r.index, "label": r.label, "grid": self.grid, "seed": self.seed, "sweeps": r.sweeps,
            "discrete_energy": repr(r.trace[-1]), "value": repr(r.value.value),
            "total_error": repr(float(r.value.total_error)), "sup_distance": repr(r.sup_distance),
        } for r in self.results]

    def to_csv(self) -> str:
        rows = self.to_rows()
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        wr.writerows(rows)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "grid": self.grid, "seed": self.seed, "starts": self.starts,
            "best": {"label": self.best.label, "nodes": self.best.nodes.tolist(), "values": self.best.values.tolist()},
            "value": self.value.as_dict(), "sup_distance": self.sup_distance,
            "iterations": self.iterations, "traces": self.traces, "per_start": self.to_rows(),
        }, indent=1) + "\n"


# ------------------------------------------------------------------ grid data


def make_grid(M: int) -> np.ndarray:
    """M uniform nodes on [-T, T], both ends included (M = 2 leaves no free node)."""
    if M < 2:
        raise ValueError("grid needs M >= 2 nodes")
    t = np.linspace(-T_FLOAT, T_FLOAT, M)
    if M % 2:
        t[M // 2] = 0.0
    t[0], t[-1] = -T_FLOAT, T_FLOAT
    return t


@dataclass
class _Rule:
    H: np.ndarray
    W: np.ndarray
    P: np.ndarray
    CAP: np.ndarray
    WQ: np.ndarray
    LAM: np.ndarray

    @classmethod
    def on(cls, t: np.ndarray, q: int) -> "_Rule":
        g, wq = np.polynomial.legendre.leggauss(q)
        lam = (g + 1) / 2
        H = np.diff(t)
        tq = t[:-1, None] + H[:, None] * lam[None]
        return cls(H, kernels.base(tq), kernels.psi(tq), 5 * np.abs(tq), H[:, None] * wq[None] / 2, lam)

    def args(self):
        return self.H, self.W, self.P, self.CAP, self.WQ, self.LAM

    def energy(self, U: np.ndarray) -> float:
        y = U[:-1, None] + (U[1:] - U[:-1])[:, None] * self.LAM[None] - self.W
        pot = np.sum(self.WQ * self.P * np.minimum(np.abs(y), self.CAP))
        return float(np.sum(np.diff(U) ** 2 / self.H) + pot)


def _descend(U: np.ndarray, rule: _Rule, opts: SolveOptions) -> tuple[np.ndarray, list, int]:
    U = np.ascontiguousarray(U, dtype=float).copy()
    trace = [rule.energy(U)]
    r = opts.radius
    sweeps = 0
    while r >= opts.min_radius and sweeps < opts.max_sweeps:
        dec, moves = kernels.sweep(U, *rule.args(), r, opts.golden_iters, opts.accept)
        sweeps += 1
        e = rule.energy(U)
        # an accepted move lowers its local energy, which is the global change
        trace.append(e)
        if moves == 0 or dec < 1e-3 * r * r:
            r *= 0.5
    return U, trace, sweeps


def sup_distance(problem: Problem, u: TrialFunction, per_element: int = 8) -> float:
    lam = np.linspace(0.0, 1.0, per_element + 1)
    t = (u.nodes[:-1, None] + np.diff(u.nodes)[:, None] * lam[None]).ravel()
    return float(np.max(np.abs(u(t) - problem.w_double(t))))


def _starts(problem: Problem, t: np.ndarray, count: int, seed: int) -> list[tuple[str, np.ndarray]]:
    rng = np.random.default_rng(seed)
    w = problem.w_double(t)
    a, b = problem.boundary()
    w[0], w[-1] = a, b
    chord = a + (b - a) * (t - t[0]) / (t[-1] - t[0])
    out = [("w-interpolant", w.copy()), ("chord", chord)]
    anchors = problem.anchors_double
    k = 0
    while len(out) < count:
        kind = k % 3
        if kind == 0:  # random Lipschitz perturbation of w, pinned
            p = np.cumsum(rng.uniform(-1, 1, t.size)) * (t[1] - t[0])
            p -= p[0] + (p[-1] - p[0]) * (t - t[0]) / (t[-1] - t[0])
            out.append((f"random-{k}", w + p))
        elif kind == 1:  # bump centred at an anchor
            c = anchors[rng.integers(len(anchors))]
            h, wid = rng.uniform(-0.01, 0.01), rng.uniform(0.002, 0.02)
            bump = h * np.maximum(0.0, 1 - np.abs(t - c) / wid)
            bump[0] = bump[-1] = 0.0
            out.append((f"anchor-bump-{k}", w + bump))
        else:  # convex blend of chord and w
            s = rng.uniform(0, 1)
            out.append((f"blend-{k}", s * chord + (1 - s) * w))
        k += 1
    return out[:count]


def minimize_direct(problem: Problem, M: int, N: int | None = None, starts: int = 4, seed: int = 0,
                    opts: SolveOptions | None = None, quad: QuadOptions | None = None) -> SolveReport:
    """Multi-start descent on nodal values with u(+-T) = w(+-T)."""
    opts = opts or SolveOptions()
    N = problem.depth if N is None else N
    t = make_grid(M)
    rule = _Rule.on(t, opts.quad_points)
    init = _starts(problem, t, max(1, starts), seed)

    def run(i: int) -> StartResult:
        label, U0 = init[i]
        if t.size > 2:
            U, trace, sweeps = _descend(U0, rule, opts)
        else:
            U, trace, sweeps = U0.copy(), [rule.energy(U0)], 0
        u = TrialFunction(t, U, label)
        return StartResult(i, label, sweeps, trace, u, functional(problem, u, N, quad), sup_distance(problem, u))

    if opts.workers > 1:
        with ThreadPoolExecutor(opts.workers) as ex:
            results = list(ex.map(run, range(len(init))))
    else:
        results = [run(i) for i in range(len(init))]
    best = min(results, key=lambda r: (r.value.value, r.index))
    return SolveReport(best.final, best.value, len(results), [r.sweeps for r in results], best.sup_distance,
                       [r.trace for r in results], results, M, seed)


# ------------------------------------------------------------------ competitors

KINDS = ("chord", "mollified", "bump", "random", "prior")


def _mollify(problem: Problem, t: np.ndarray, width: float) -> np.ndarray:
    g, wq = np.polynomial.legendre.leggauss(16)
    s = t[:, None] + width * g[None]
    s = np.clip(s, -T_FLOAT, T_FLOAT)
    k = 0.75 * (1 - g**2)  # Epanechnikov kernel on [-1, 1]
    return (problem.w_double(s) * (wq * k)[None]).sum(1) / (wq * k).sum()


def competitor_suite(problem: Problem, kinds=KINDS, count: int = 100, seed: int = 0, M: int = 1024,
                     prior: list[TrialFunction] | None = None) -> list[TrialFunction]:
    """Competitors pinned to w(+-T); deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    t = make_grid(M)
    w = problem.w_double(t)
    a, b = problem.boundary()
    w[0], w[-1] = a, b
    out: list[TrialFunction] = []

    def add(vals, label):
        v = np.array(vals, dtype=float)
        v[0], v[-1] = a, b
        out.append(TrialFunction(t.copy(), v, label))

    kinds = tuple(kinds)
    if "chord" in kinds:
        add(a + (b - a) * (t - t[0]) / (t[-1] - t[0]), "chord")
    if "prior" in kinds:
        for u in prior or []:
            add(u(t), f"prior:{u.label}")
    gens = [k for k in ("mollified", "bump", "random") if k in kinds]
    anchors = problem.anchors_double
    i = 0
    while gens and len(out) < count:
        kind = gens[i % len(gens)]
        if kind == "mollified":
            width = float(10 ** rng.uniform(-5, -2))
            add(_mollify(problem, t, width), f"mollified w={width:.3g}")
        elif kind == "bump":
            c = float(anchors[rng.integers(len(anchors))]) if rng.random() < 0.5 else float(rng.uniform(-T_FLOAT, T_FLOAT))
            h = float(rng.choice([-1, 1]) * 10 ** rng.uniform(-5, -1.5))
            wid = float(10 ** rng.uniform(-3.5, -1.3))
            add(w + h * np.maximum(0.0, 1 - np.abs(t - c) / wid), f"bump c={c:.4g} h={h:.3g} w={wid:.3g}")
        else:
            knots = int(rng.integers(4, 64))
            tk = np.linspace(-T_FLOAT, T_FLOAT, knots + 1)
            slopes = rng.uniform(-2, 2, knots) * float(10 ** rng.uniform(-2, 0))
            slopes -= slopes.mean()  # uniform knots: the perturbation vanishes at both ends
            slopes *= min(1.0, 2.0 / max(np.max(np.abs(slopes)), 1e-300))  # 2-Lipschitz
            pk = np.concatenate([[0.0], np.cumsum(slopes * np.diff(tk))])
            pk[-1] = 0.0
            add(w + np.interp(t, tk, pk), f"random knots={knots}")
        i += 1
    return out[:count] if len(out) > count else out


def bump(problem: Problem, M: int, center: float, height: float, width: float) -> TrialFunction:
    """w-interpolant plus a hat of the given height; height 0 gives the interpolant."""
    u = w_interpolant(problem, M)
    if height:
        u.values = u.values + height * np.maximum(0.0, 1 - np.abs(u.nodes - center) / width)
        u.values[0], u.values[-1] = problem.boundary()
    u.label = f"bump c={center:.4g} h={height:.3g} w={width:.3g}"
    return u


def minimality_check(problem: Problem, competitors: list[TrialFunction], N: int | None = None,
                     quad: QuadOptions | None = None) -> list[dict]:
    """value(u) - (L(w) - combined error) for each competitor; negative means a violation."""
    from .functional import w_value

    N = problem.depth if N is None else N
    Fw = w_value(problem, N)
    rows = []
    for u in competitors:
        F = functional(problem, u, N, quad)
        slack = F.value - (Fw.value - Fw.total_error - F.total_error)
        rows.append({"label": u.label, "value": F.value, "error": F.total_error, "w_value": Fw.value,
                     "slack": slack, "basic_slack": F.basic - (Fw.value - Fw.total_error - F.quad_error),
                     "ok": slack >= 0})
    return rows
