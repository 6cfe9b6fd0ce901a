import random

import pytest
from mpmath import mp, mpf

from singmin.special_functions import (
    DomainError,
    GuardedValue,
    Offset,
    constant_C,
    eval_base,
    eval_base_d1,
    eval_base_d2,
    eval_base_d2_bound,
    fmt,
    half_width,
    psi,
    t_psi,
    theta_of,
)

# 60-digit mpmath oracles of t sin(log log log 1/t) and its derivatives (mp.diff)
ORACLE = {
    "0.01": ("0.0041088324470317004751", "0.281251782565942825", "-18.451971772665944934", "36639.094065249314128"),
    "0.001": ("0.00061223910338671254909", "0.55301373653180164442", "-75.670524779666514505", "241095.46696422875766"),
    "1e-10": ("9.0994233591713936389e-11", "0.90419993895060697417", "-62457403.721921538202", "1311942966365.722914"),
}


@pytest.mark.parametrize("t", sorted(ORACLE))
def test_base_against_oracle(t):
    w, d1, d2, p1 = (mpf(v) for v in ORACLE[t])
    # oracles carry 20 significant digits
    assert abs(eval_base(mpf(t)).value - w) < abs(w) * mpf("1e-18")
    assert abs(eval_base_d1(mpf(t)).value - d1) < abs(d1) * mpf("1e-18")
    assert abs(eval_base_d2(mpf(t)).value - d2) < abs(d2) * mpf("1e-15")
    assert abs(psi(mpf(t), 1).value - p1) < abs(p1) * mpf("1e-18")


def test_base_zero_and_domain():
    assert eval_base(0).value == 0 and eval_base(0).abs_error == 0
    assert psi(0).value == 0
    with pytest.raises(DomainError):
        eval_base(mpf("0.5"))
    with pytest.raises(DomainError):
        eval_base_d1(0)
    with pytest.raises(DomainError):
        psi(mpf("0.1"), 1)  # 5|t| >= 1/e


def test_symmetry_random():
    rng = random.Random(7)
    for _ in range(1000):
        t = mpf(10) ** (-rng.uniform(0.5, 200))
        assert eval_base(-t).value == -eval_base(t).value
        assert eval_base_d1(-t).value == eval_base_d1(t).value
        assert eval_base_d2_bound(-t) == eval_base_d2_bound(t)


def test_finite_difference_derivative():
    t, h = mpf("0.005"), mpf("1e-9")
    fd = (eval_base(t + h).value - eval_base(t - h).value) / (2 * h)
    assert abs(fd - eval_base_d1(t).value) < 1e-6


def test_d2_bound_dominates_second_difference():
    rng = random.Random(3)
    h = mpf("1e-12")
    with mp.workprec(200):
        for _ in range(100):
            t = mpf(10) ** rng.uniform(-6, mp.log10(0.03))
            sd = (eval_base(t + h).value - 2 * eval_base(t).value + eval_base(t - h).value) / h**2
            assert eval_base_d2_bound(t) >= abs(sd)


def test_d2_bound_decays():
    for k in (9, 20, 50, 100, 300):
        t = mpf(10) ** -k
        assert t * eval_base_d2_bound(t) < 0.1


def test_derivative_bound_and_tau_condition():
    T = half_width()
    rng = random.Random(11)
    for _ in range(500):
        t = T * mpf(rng.random()) ** 8
        if t == 0:
            continue
        l1 = -mp.log(t)
        l2 = mp.log(l1)
        assert abs(eval_base_d1(t).value) <= 1 + 1 / (l1 * l2) <= 1 + mp.exp(-1)
        assert 1 / l2 >= t
    # the tau condition up to 2T
    for k in range(1, 101):
        t = 2 * T * k / 100
        assert 1 / mp.log(-mp.log(t)) >= t


def test_theta_and_plain_agree():
    for t in ("1e-5", "1e-40", "1e-300"):
        p = Offset.plain(mpf(t))
        th = p.to_theta()
        a, b = eval_base_d1(p), eval_base_d1(th)
        assert abs(a.value - b.value) <= a.abs_error + b.abs_error + mpf(2) ** -100


def test_theta_offset_beyond_range():
    off = Offset.from_theta(mp.pi / 2)  # |s| = exp(-exp(e^{pi/2})) ~ 1e-51
    v = eval_base(off)
    mag = off.materialize()
    assert abs(v.value - mag) <= v.abs_error + mag * mpf(2) ** -100  # sin(pi/2) = 1
    big = Offset.from_theta(40)  # not materializable
    assert big.materialize() is None
    assert abs(eval_base_d1(big).value - mp.sin(40)) < mpf(2) ** -100


def test_t_psi_continuous_at_zero():
    vals = [t_psi(mpf(10) ** -k).value for k in (10, 100, 1000, 10000)]
    assert vals == sorted(vals, reverse=True)
    assert t_psi(0).value == 0


def test_constant_C():
    C = constant_C()
    assert C > 1
    assert C >= 1 + 5 * mpf("0.01") * psi(mpf("0.01")).value
    assert abs(constant_C(4096) - C) / C < 1e-3
    assert abs(C - mpf("3422.08")) < 0.1


def test_guarded_value_contains():
    g = GuardedValue(mpf(1), mpf("0.5"))
    assert g.contains(1.4) and not g.contains(1.6)


def test_fmt_huge_and_normal():
    assert fmt(mpf("0.5")) == "0.5"
    tiny = mp.exp(-mp.exp(mpf(5000)))
    assert fmt(tiny).startswith("exp(-exp(5000")
    assert theta_of(mpf("1e-300")) > 0
