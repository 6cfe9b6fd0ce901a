import numpy as np
import pytest
from mpmath import mpf

from singmin.functional import (
    QuadOptions,
    TrialFunction,
    approx_jump_check,
    functional,
    lagrangian,
    w_interpolant,
    w_value,
)
from singmin.solver import bump
from singmin.special_functions import T_FLOAT, DomainError, psi


def test_lagrangian_at_w(problem):
    t = mpf("0.01")
    w = problem.construction.eval_w(t).value
    v = lagrangian(problem, t, w, 0)
    assert v.value == 0
    # the sub-resolution stages may jump by kappa_i inside the rounding radius of w
    assert v.abs_error < 1
    assert lagrangian(problem, t, w, 3).value == 9


def test_lagrangian_large_y(problem):
    t = mpf("0.01")
    v = lagrangian(problem, t, mpf(10), 0)
    expected = 5 * t * psi(t).value + problem.weight.frozen_total()
    assert abs(v.value - expected) < mpf("1e-25") * expected
    assert v.abs_error <= mpf(2) ** -6 * (1 + mpf(2) ** -50)


def test_kinetic_second_difference(problem):
    # p enters only through p^2
    t, y = mpf("0.02"), mpf("0.003")
    h = mpf("0.125")
    L = [lagrangian(problem, t, y, p).value for p in (h, 2 * h, 3 * h)]
    assert abs(L[2] - 2 * L[1] + L[0] - 2 * h * h) < mpf("1e-30")


def test_w_value(problem):
    Fw = w_value(problem)
    assert 0.0045 < Fw.value < 0.0046
    assert Fw.total_error < 1e-15
    assert Fw.potential == 0 and Fw.frozen == 0


def test_interpolant_converges_to_w(problem):
    Fw = w_value(problem).value
    vals = [functional(problem, w_interpolant(problem, M)).value for M in (64, 256, 1024)]
    # frozen 2 T sum kappa is paid by any u != w
    frozen = float(2 * T_FLOAT * problem.weight.frozen_total())
    assert 0.058 < frozen < 0.059
    assert vals[0] > vals[1] > vals[2] > Fw + frozen
    F = functional(problem, w_interpolant(problem, 1024))
    assert vals[2] - (Fw + frozen) < F.total_error


def test_chord_value_above_interpolant(problem):
    a, b = problem.boundary()
    chord = TrialFunction(np.array([-T_FLOAT, T_FLOAT]), np.array([a, b]), "chord")
    Fc = functional(problem, chord)
    Fi = functional(problem, w_interpolant(problem, 1024))
    assert Fc.value > Fi.value + Fi.total_error
    assert Fc.kinetic == pytest.approx((b - a) ** 2 / (2 * T_FLOAT), rel=1e-14)


def test_quadrature_self_consistency(problem):
    u = w_interpolant(problem, 256)
    coarse = functional(problem, u, opts=QuadOptions(tol=1e-8))
    fine = functional(problem, u, opts=QuadOptions(tol=1e-12))
    assert abs(coarse.value - fine.value) <= coarse.quad_error + fine.quad_error


def test_error_budget_components(problem):
    F = functional(problem, w_interpolant(problem, 64), split=True)
    assert F.weight_tail_error == pytest.approx(2 * T_FLOAT * 2**-6, rel=1e-12)
    assert F.singular_interval_bound < 1e-25
    p1, p2 = F.potential_parts
    assert p1 + p2 == pytest.approx(F.potential, rel=1e-9)
    assert set(F.as_dict()) >= {"value", "quad_error", "total_error", "kinetic", "frozen"}


def test_difference_quotient_inequality(problem):
    # sum (u'^2 - w'^2) >= sum 2 (u' - w') w' element by element
    w = w_interpolant(problem, 128)
    rng = np.random.default_rng(0)
    u = TrialFunction(w.nodes, w.values + 1e-3 * rng.standard_normal(w.values.size))
    du, dw = u.slopes, w.slopes
    lhs = du**2 - dw**2
    rhs = 2 * (du - dw) * dw
    assert np.all(lhs - rhs >= -1e-12 * (np.abs(lhs) + np.abs(rhs)))


def test_domain_errors(problem):
    u = TrialFunction(np.array([-2 * T_FLOAT, T_FLOAT]), np.array([0.0, 0.0]))
    with pytest.raises(DomainError):
        functional(problem, u)
    with pytest.raises(ValueError):
        functional(problem, w_interpolant(problem, 8), N=9)
    with pytest.raises(ValueError):
        TrialFunction(np.array([0.0, 0.0]), np.array([1.0, 2.0]))


@pytest.mark.parametrize("n", [0, 1])
def test_jump_check(problem, n):
    cands = [w_interpolant(problem, 256)]
    if n == 0:
        a, b = problem.boundary()
        cands.append(TrialFunction(np.array([-T_FLOAT, T_FLOAT]), np.array([a, b]), "chord"))
    else:
        cands.append(bump(problem, 256, 0.0, 0.01, T_FLOAT / 3))
    for u in cands:
        r = approx_jump_check(problem, u, n)
        assert r.passed, r
        assert r.analytic_bound < r.threshold
        assert r.gap <= r.error_bar
    with pytest.raises(ValueError):
        approx_jump_check(problem, cands[0], 6)
