import numpy as np
import pytest
from mpmath import mpf

from singmin import kernels
from singmin.special_functions import T_FLOAT, eval_base, eval_base_d1, psi

try:
    compiled = kernels.implementation("compiled")
except ImportError:  # extension not built
    compiled = None
pure = kernels.implementation("python")


def test_double_helpers_match_extended():
    for t in (1e-200, 1e-9, 0.003, 0.02, -0.031):
        assert kernels.base(np.array([t]))[0] == pytest.approx(float(eval_base(mpf(t)).value), rel=1e-13)
        assert kernels.base_d1(np.array([t]))[0] == pytest.approx(float(eval_base_d1(mpf(t)).value), rel=1e-12)
        assert kernels.psi(np.array([t]))[0] == pytest.approx(float(psi(mpf(t)).value), rel=1e-11)
    assert kernels.base(np.array([0.0]))[0] == 0.0


def _problem_arrays(M=64, q=6):
    t = np.linspace(-T_FLOAT, T_FLOAT, M + 1)
    g, wq = np.polynomial.legendre.leggauss(q)
    lam = (g + 1) / 2
    H = np.diff(t)
    tq = t[:-1, None] + H[:, None] * lam[None]
    return t, (H, kernels.base(tq), kernels.psi(tq), 5 * np.abs(tq), H[:, None] * wq[None] / 2, lam)


@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
def test_backends_agree_on_sweep():
    t, args = _problem_arrays()
    U0 = kernels.base(t) + 1e-3 * np.sin(40 * t)
    Ua, Ub = U0.copy(), U0.copy()
    ra = pure.sweep(Ua, *args, 1e-3, 30, 1e-15)
    rb = compiled.sweep(Ub, *args, 1e-3, 30, 1e-15)
    assert ra[1] == rb[1]
    np.testing.assert_allclose(Ua, Ub, rtol=0, atol=1e-14)
    assert ra[0] == pytest.approx(rb[0], rel=1e-10)


@pytest.mark.skipif(compiled is None, reason="compiled kernels not built")
def test_backends_agree_on_quadrature():
    pieces = np.array([[-0.03, -0.01], [-0.01, -1e-30], [1e-30, 0.02], [0.02, 0.0329]])
    ua = np.array([0.001, -0.002, 0.0005, 0.0])
    slopes = np.array([0.3, -0.1, 0.2, 0.0])
    ta = pieces[:, 0].copy()
    va, ea, _ = pure.potential_pieces(pieces, ua, slopes, ta, 3, 1e-10, 30)
    vb, eb, _ = compiled.potential_pieces(pieces, ua, slopes, ta, 3, 1e-10, 30)
    np.testing.assert_allclose(va, vb, rtol=1e-12)


def test_backend_name():
    assert kernels.BACKEND in ("compiled", "python")
