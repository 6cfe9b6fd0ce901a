import random

import numpy as np
import pytest
from mpmath import mp, mpf

from singmin.special_functions import DomainError, constant_C, half_width, psi, t_psi
from singmin.weight import WeightFunction, phi, phi_lipschitz_y


@pytest.fixture(scope="module")
def wf(con6):
    return WeightFunction(con6.schedule)


def test_phi_zero_at_y_zero(wf):
    rng = random.Random(1)
    T = half_width()
    for _ in range(200):
        t = T * (2 * mpf(rng.random()) - 1)
        assert phi(wf, t, 0).value == 0
    for x in wf.schedule.anchors:
        assert wf.phi(x, 0).value == 0


def test_capped_regime_oracle(wf):
    # |y| >= 5|t|: phi~_0 = 5 |t| psi(t); stages n >= 1 are frozen at kappa_n
    t = mpf("0.01")
    v = wf.tilde(0, t, 10)
    assert abs(v - 5 * t * psi(t).value) < mpf("1e-25") * v
    total = wf.phi(t, 10).value
    assert abs(total - v - wf.frozen_total()) < mpf("1e-25") * total


def test_kappa_values(wf):
    for n in range(1, 7):
        k = wf.kappa(n)
        assert 0 < k < mpf(2) ** -n
        assert abs(k - 5 * t_psi(wf.schedule.stages[n].T).value) <= k * mpf(2) ** -100


def test_monotone_in_abs_y(wf):
    rng = np.random.default_rng(5)
    T = float(half_width())
    for _ in range(10_000 // 50):
        t = mpf(float(rng.uniform(-T, T)))
        ys = np.sort(np.abs(rng.normal(0, 0.05, 51)))
        vals = [wf.phi(t, mpf(float(y)) * (1 if k % 2 else -1)).value for k, y in enumerate(ys)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_two_regime_consistency(wf):
    for t in ("0.001", "0.02", "-0.013"):
        t = mpf(t)
        y = 5 * abs(t)
        lo = psi(t).value * y
        hi = 5 * t_psi(t).value
        assert abs(lo - hi) <= hi * mpf(2) ** -100
        assert abs(wf.tilde(0, t, y) - hi) <= hi * mpf(2) ** -100


def test_continuity_across_Y_boundary(wf):
    for n in range(1, 7):
        st = wf.schedule.stages[n]
        y = st.T  # below the cap 5 T_n
        inside = wf.tilde(n, st.x + st.T * (1 - mpf(2) ** -90), y)
        outside = wf.tilde(n, st.x + st.T * (1 + mpf(2) ** -90), y)
        assert abs(inside - outside) <= abs(outside) * mpf(2) ** -60


def test_tail_bound(wf):
    rng = np.random.default_rng(2)
    T = float(half_width())
    for _ in range(300):
        t, y = mpf(float(rng.uniform(-T, T))), mpf(float(rng.normal(0, 0.1)))
        a, b = wf.phi(t, y, 3).value, wf.phi(t, y, 6).value
        assert abs(b - a) < mpf(2) ** -3
    assert wf.phi(mpf("0.01"), 1, 4).abs_error >= mpf(2) ** -4


def test_global_bound(wf):
    C = constant_C()
    rng = np.random.default_rng(8)
    T = float(half_width())
    best = max(wf.phi(mpf(float(t)), mpf(float(y))).value
               for t, y in zip(rng.uniform(-T, T, 2000), rng.uniform(-1, 1, 2000)))
    assert best <= C


def test_lipschitz_bound(wf):
    assert phi_lipschitz_y(wf, wf.schedule.anchors[0]) == mp.inf
    assert wf.lipschitz_y((2, 0)) == mp.inf
    rng = np.random.default_rng(4)
    T = float(half_width())
    for _ in range(100):
        t = mpf(float(rng.uniform(-T, T)))
        L = wf.lipschitz_y(t)
        y, h = mpf(float(rng.normal(0, 0.01))), mpf("1e-9")
        q = abs(wf.phi(t, y + h).value - wf.phi(t, y).value) / h
        assert q <= L


def test_lipschitz_off_G_uses_M(wf):
    s = wf.schedule
    t = mpf("0.0071")  # away from every anchor and G_n interval
    for n in range(6):
        assert not any(a < t < b for a, b in s.G(n))
    assert wf.lipschitz_y(t, s.stages[0].m if s.stages[0].m < 6 else 6) <= s.stages[0].M


def test_domain(wf):
    with pytest.raises(DomainError):
        wf.phi(1, 0)
    with pytest.raises(ValueError):
        WeightFunction(wf.schedule, N=9)
