"""Compare the compiled and pure-Python kernels on solver-sized inputs.

    python benchmarks/bench_kernels.py [--nodes 257] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from singmin import kernels
from singmin.special_functions import half_width


def _setup(nodes: int, q: int = 8, seed: int = 0):
    T = float(half_width())
    rng = np.random.default_rng(seed)
    x = np.linspace(-T, T, nodes)
    H = np.diff(x)
    g, wq = np.polynomial.legendre.leggauss(q)
    lam = (g + 1) / 2
    tq = x[:-1, None] + H[:, None] * lam[None]
    W = kernels.base(tq)
    data = (H, W, kernels.psi(tq), 5 * np.abs(tq), H[:, None] * wq[None] / 2, lam)
    U0 = kernels.base(x) + 1e-3 * rng.standard_normal(nodes)
    U0[0], U0[-1] = kernels.base(x[[0, -1]])
    pieces = np.stack([x[:-1], x[1:]], 1)
    slopes = np.diff(U0) / H
    return U0, data, (pieces, U0[:-1], slopes, x[:-1])


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=257)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    U0, data, pp = _setup(args.nodes)
    impls = {"python": kernels.implementation("python")}
    try:
        impls["compiled"] = kernels.implementation("compiled")
    except ImportError:
        print("compiled kernels not built; timing the Python reference only")
    rows = {}
    for name, mod in impls.items():
        t_sweep = _time(lambda: mod.sweep(U0.copy(), *data, 1e-3, 30, 0.0), args.repeat)
        t_quad = _time(lambda: mod.potential_pieces(*pp, 3, 1e-10, 30), args.repeat)
        rows[name] = (t_sweep, t_quad)
        print(f"{name:9s} sweep {t_sweep * 1e3:9.2f} ms   adaptive quadrature {t_quad * 1e3:9.2f} ms")
    if len(rows) == 2:
        (ps, pq), (cs, cq) = rows["python"], rows["compiled"]
        print(f"speedup   sweep {ps / cs:7.1f}x        adaptive quadrature {pq / cq:7.1f}x")
        a = impls["python"].sweep(U0.copy(), *data, 1e-3, 30, 0.0)
        b = impls["compiled"].sweep(U0.copy(), *data, 1e-3, 30, 0.0)
        print(f"agreement sweep decrease {a[0]:.17g} vs {b[0]:.17g}")


if __name__ == "__main__":
    main()
