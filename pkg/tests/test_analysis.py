import numpy as np
import pytest
from mpmath import mp, mpf

from singmin.analysis import (
    AnchoredTrial,
    PlainTrial,
    audit_competitor,
    anchored_quotients,
    dini_probe,
    lifted_competitor,
    lipschitz_scan,
    plateau_competitor,
    sigma_membership,
)
from singmin.functional import w_interpolant
from singmin.special_functions import T_FLOAT, Offset


def test_dini_at_origin(problem):
    r = dini_probe(problem, 0)
    assert r.alpha == 1
    assert r.quotient_plus == 1 and r.quotient_minus == -1
    assert r.residual < mpf("1e-30")
    s, q, closed, _ = r.plain_samples[0]
    assert s == mpf(1e-300)
    # 60-digit oracle: sin(log log log 1e300)
    assert abs(q - mpf("0.95330286465956574983")) < mpf("1e-19")
    assert abs(q - closed) < mpf("1e-30")


@pytest.mark.parametrize("n", [1, 2, 3])
def test_dini_at_later_anchors(problem, n):
    r = dini_probe(problem, n)
    assert r.residual < mpf("1e-12")
    assert r.theta_plus >= r.theta_tau and r.theta_minus >= r.theta_tau
    # the 1e-300 offset lies inside stage 1..N supports only through sub-resolution terms
    s, q, closed, bound = r.plain_samples[0]
    if closed is not None:
        assert abs(q - closed) <= (bound or 0) + mpf("1e-12")
    with pytest.raises(ValueError):
        dini_probe(problem, 7)


def test_sigma_at_anchor(problem):
    for k in (1, 10, 10**6):
        r = sigma_membership(problem, (0, 0), k)
        assert r.plus and r.minus
        assert r.method == "closed-form witness"
    r = sigma_membership(problem, problem.schedule.anchors[2], 10**6)
    assert r.plus and r.minus
    assert isinstance(r.witness_plus, Offset)


def test_sigma_away_from_anchors(problem):
    r = sigma_membership(problem, 0.0071, 10**6)
    assert r.method == "sampled search"
    assert r.plus is None and r.minus is None
    assert r.margin_plus > 1e-6 and r.margin_minus > 1e-6
    with pytest.raises(ValueError):
        sigma_membership(problem, 0.0071, 0)


def test_lipschitz_scan_chord(problem):
    a, b = problem.boundary()
    chord = lambda t: a + (b - a) * (t + T_FLOAT) / (2 * T_FLOAT)  # noqa: E731
    q = lipschitz_scan(chord)
    assert q == pytest.approx(abs(b - a) / (2 * T_FLOAT), rel=1e-6)


def test_lipschitz_scan_w(problem):
    q = lipschitz_scan(problem.w_double)
    # |w~'| <= 1 + 1/(l1 l2) < 1 + 1/e
    assert 0.5 < q < 1 + np.exp(-1)


def test_anchored_quotients_below_two(problem):
    eps1 = problem.schedule.stages[1].eps
    q = anchored_quotients(problem, 1, 2)
    assert mpf("0.9") < q <= 2 - eps1 + mpf("1e-9")


def test_lifted_competitor_audit(problem):
    u = lifted_competitor(problem, 6 * T_FLOAT)
    a = audit_competitor(problem, PlainTrial(problem, u, 0), 6)
    assert a.passed, [c.as_dict() for c in a.checks if not c.passed]
    # J = (-a, b) is stored as the pair (a, b)
    a_, b_ = a.J
    assert a_ > 0 and b_ > 0 and a.c == max(a_, b_)
    names = {c.name for c in a.checks}
    assert {"envelope", "phi_mass", "endpoint_drift"} <= names


def test_interpolant_has_empty_J(problem):
    u = w_interpolant(problem, 257)
    a = audit_competitor(problem, PlainTrial(problem, u, 0), 6)
    assert a.J is None or a.J[0] == a.J[1]
    assert [c.name for c in a.checks] == ["envelope"]
    assert a.passed


@pytest.fixture(scope="module")
def anchored_audit(problem):
    st = problem.schedule.stages[1]
    h = mpf("0.3") * st.T
    return audit_competitor(problem, AnchoredTrial(problem, 1, h), 6), h


def test_anchored_trial_audit(anchored_audit):
    a, h = anchored_audit
    assert a.passed, [c.as_dict() for c in a.checks if not c.passed]
    names = [c.name for c in a.checks]
    for expected in ("envelope", "upsilon2", "lip_on_J", "phi_mass", "endpoint_drift", "energy_excess"):
        assert expected in names
    # plateau of height h with slopes -+kappa: J = (-h/3, h/3)
    a_, b_ = a.J
    with mp.workprec(128):
        assert abs(a_ - h / 3) <= h * mpf(2) ** -90
        assert abs(b_ - h / 3) <= h * mpf(2) ** -90
    assert a.check("phi_mass").margin > 1
    assert set(a.as_dict()) >= {"n", "J", "c", "checks", "passed"}


def test_anchored_trial_height_guard(problem):
    st = problem.schedule.stages[1]
    with pytest.raises(ValueError):
        AnchoredTrial(problem, 1, st.T)


def test_plateau_competitor_shape(problem):
    h = 1e-3
    u = plateau_competitor(problem, h, M=1025)
    a, b = problem.boundary()
    assert u.values[0] == a and u.values[-1] == b
    i0 = int(np.argmin(np.abs(u.nodes)))
    assert u.values[i0] == pytest.approx(h, rel=1e-12)
    assert np.all(u.values >= problem.w_double(u.nodes) - 1e-15)
