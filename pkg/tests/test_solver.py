import numpy as np
import pytest

from singmin.functional import TrialFunction, functional, w_interpolant, w_value
from singmin.solver import (
    SolveOptions,
    bump,
    competitor_suite,
    make_grid,
    minimality_check,
    minimize_direct,
)
from singmin.special_functions import T_FLOAT


def test_grid():
    t = make_grid(9)
    assert t.size == 9 and t[0] == -T_FLOAT and t[-1] == T_FLOAT and t[4] == 0.0
    assert make_grid(2).tolist() == [-T_FLOAT, T_FLOAT]
    with pytest.raises(ValueError):
        make_grid(1)


def test_boundary_only_grid_is_chord(problem):
    r = minimize_direct(problem, 2, starts=2)
    a, b = problem.boundary()
    assert r.best.values.tolist() == [a, b]
    chord = TrialFunction(np.array([-T_FLOAT, T_FLOAT]), np.array([a, b]))
    assert r.value.value == functional(problem, chord).value
    assert r.iterations == [0, 0]


@pytest.fixture(scope="module")
def ladder(problem):
    return {M: minimize_direct(problem, M, starts=2, seed=0) for M in (64, 256, 1024)}


def test_boundary_pinned_and_trace_monotone(ladder, problem):
    a, b = problem.boundary()
    for r in ladder.values():
        assert r.best.values[0] == a and r.best.values[-1] == b
        for tr in r.traces:
            assert all(y <= x for x, y in zip(tr, tr[1:]))


def test_sup_distance_decreases(ladder):
    d = [ladder[M].sup_distance for M in (64, 256, 1024)]
    assert d[0] > d[1] > d[2]
    assert d[2] < 1e-5


def test_interpolant_start_within_error_bar(ladder, problem):
    r = ladder[1024]
    Fi = functional(problem, w_interpolant(problem, 1024))
    assert abs(r.value.value - Fi.value) <= r.value.total_error + Fi.total_error
    assert r.value.value <= Fi.value + Fi.total_error


def test_minimum_not_below_w(ladder, problem):
    Fw = w_value(problem)
    for r in ladder.values():
        assert r.value.value >= Fw.value - Fw.total_error - r.value.total_error


def test_seed_determinism(problem):
    a = minimize_direct(problem, 64, starts=3, seed=5)
    b = minimize_direct(problem, 64, starts=3, seed=5)
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.best.values, b.best.values)


def test_workers_do_not_change_result(problem):
    a = minimize_direct(problem, 64, starts=3, seed=1)
    b = minimize_direct(problem, 64, starts=3, seed=1, opts=SolveOptions(workers=3))
    assert a.to_csv() == b.to_csv()


def test_report_formats(ladder):
    r = ladder[64]
    lines = r.to_csv().splitlines()
    assert lines[0].startswith("start,label,grid,seed")
    assert len(lines) == 1 + r.starts
    import json

    d = json.loads(r.to_json())
    assert d["grid"] == 64 and len(d["best"]["nodes"]) == 64


def test_suite_pinned_and_deterministic(problem):
    s1 = competitor_suite(problem, count=30, seed=3, M=256)
    s2 = competitor_suite(problem, count=30, seed=3, M=256)
    a, b = problem.boundary()
    assert len(s1) == 30
    for u, v in zip(s1, s2):
        assert u.label == v.label and np.array_equal(u.values, v.values)
        assert u.values[0] == a and u.values[-1] == b
        if u.label.startswith("random"):
            # the perturbation of the w-interpolant is 2-Lipschitz
            w = np.interp(u.nodes, u.nodes, problem.w_double(u.nodes))
            w[0], w[-1] = a, b
            assert np.max(np.abs(np.diff(u.values - w) / np.diff(u.nodes))) <= 2 + 1e-9
    assert {u.label.split()[0] for u in s1} == {"mollified", "bump", "random", "chord"}


def test_zero_bump_is_interpolant(problem):
    u = bump(problem, 128, 0.0, 0.0, 0.01)
    assert np.array_equal(u.values, w_interpolant(problem, 128).values)


def test_minimality_on_small_suite(problem, ladder):
    comps = competitor_suite(problem, count=12, seed=0, M=256, prior=[ladder[256].best])
    rows = minimality_check(problem, comps)
    assert len(rows) == 12
    assert all(r["ok"] for r in rows), [r for r in rows if not r["ok"]]
