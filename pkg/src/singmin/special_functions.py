"""Base profile w~(t) = t sin(log log log 1/|t|), its derivatives, the weight
coefficients psi^1, psi^2 and the global constant C.

Everything here works in extended precision (mpmath, >= 128 bits).  Offsets
that are too small for any float format are carried in theta form, where
|s| = exp(-exp(exp(theta))).  Most quantities only need the chain of logs

    L1 = log(1/|s|),  L2 = log L1,  theta = log L2,

which is available in either form, so they never need |s| itself.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Union

from mpmath import mp, mpf

DEFAULT_PREC = 128
# theta forms above this are never materialized: an accurate |s| needs
# ~e^theta/ln2 extra working bits (about 32k bits at theta = 10)
THETA_PLAIN_MAX = 10.0
# magnitude bounds are computed up to this theta and reused beyond it
THETA_BOUND_MAX = 12.5
# rounding budget, in units of 2^-prec, for a short chain of mpmath calls
ERR_ULPS = 64

Real = Union[int, float, mpf]


class DomainError(ValueError):
    """Argument outside the domain of a triple-log expression."""


@contextmanager
def extended():
    """Run the block with at least DEFAULT_PREC bits of working precision."""
    with mp.workprec(max(mp.prec, DEFAULT_PREC)):
        yield


def eps() -> mpf:
    return ERR_ULPS * mpf(2) ** (-mp.prec)


@lru_cache(maxsize=8)
def _half_width(prec: int) -> mpf:
    with mp.workprec(prec):
        return mp.exp(-mp.e) / 2


def half_width() -> mpf:
    """T = e^{-e}/2 at the current working precision."""
    return _half_width(mp.prec)


def _t_float() -> float:
    # largest double not exceeding T, so +-T_FLOAT is always inside [-T, T]
    with mp.workprec(256):
        t = mp.exp(-mp.e) / 2
        f = float(t)
        return math.nextafter(f, 0.0) if mpf(f) > t else f


T_FLOAT = _t_float()


def _short(v) -> str:
    if isinstance(v, mpf):
        return fmt(v, 12)
    if isinstance(v, int) and v.bit_length() > 4_000:
        return f"<{v.bit_length()}-bit int>"
    if isinstance(v, (list, tuple)):
        body = ", ".join(_short(x) for x in v)
        return f"[{body}]" if isinstance(v, list) else f"({body})"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k!r}: {_short(x)}" for k, x in v.items()) + "}"
    return repr(v)


def compact_repr(self) -> str:
    """Dataclass repr that prints mpf fields through fmt (plain repr can hang)."""
    parts = (f"{f.name}={_short(getattr(self, f.name))}" for f in fields(self) if f.repr)
    return f"{type(self).__name__}({', '.join(parts)})"


@dataclass(frozen=True)
class GuardedValue:
    __repr__ = compact_repr
    value: Real
    abs_error: Real = 0

    def __float__(self) -> float:
        return float(self.value)

    def as_float(self) -> "GuardedValue":
        v = float(self.value)
        return GuardedValue(v, float(self.abs_error) + abs(v) * 2.0**-53)

    def contains(self, x: Real, slack: Real = 0) -> bool:
        return abs(mpf(x) - mpf(self.value)) <= mpf(self.abs_error) + slack


@dataclass(frozen=True)
class Offset:
    """A signed displacement s from an anchor.

    Plain form stores |s| as an mpf.  Theta form stores theta with
    |s| = exp(-exp(exp(theta))); it is used for magnitudes that should not
    (or cannot) be materialized.
    """

    __repr__ = compact_repr

    sign: int
    magnitude: mpf | None = None
    theta: mpf | None = None

    @classmethod
    def plain(cls, x: Real) -> "Offset":
        x = mpf(x)
        if x == 0:
            return cls(0, mpf(0))
        return cls(1 if x > 0 else -1, abs(x))

    @classmethod
    def from_theta(cls, theta: Real, sign: int = 1) -> "Offset":
        if sign not in (-1, 1):
            raise ValueError("theta-form offsets carry sign +1 or -1")
        return cls(sign, None, mpf(theta))

    @property
    def is_theta(self) -> bool:
        return self.theta is not None

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def negate(self) -> "Offset":
        return Offset(-self.sign, self.magnitude, self.theta)

    def logs(self) -> tuple[mpf, mpf, mpf]:
        """(L1, L2, theta) for |s|; requires 0 < |s| < 1/e."""
        if self.is_theta:
            l2 = mp.exp(self.theta)
            return mp.exp(l2), l2, self.theta
        if self.sign == 0:
            raise DomainError("triple log undefined at offset 0")
        if self.magnitude >= mp.exp(-1):
            raise DomainError(f"|offset| = {mp.nstr(self.magnitude, 8)} >= 1/e")
        l1 = -mp.log(self.magnitude)
        l2 = mp.log(l1)
        return l1, l2, mp.log(l2)

    def theta_coordinate(self) -> mpf:
        return self.logs()[2]

    def materialize(self, limit: float = THETA_PLAIN_MAX) -> mpf | None:
        """Signed value as an mpf, or None when theta exceeds `limit`."""
        if not self.is_theta:
            return self.sign * self.magnitude
        if self.theta > limit:
            return None
        return self.sign * magnitude_from_theta(self.theta)

    def magnitude_bound(self) -> mpf:
        """Upper bound for |s| that is always representable."""
        if not self.is_theta:
            return self.magnitude
        return magnitude_bound_from_theta(self.theta)

    def to_theta(self) -> "Offset":
        if self.is_theta:
            return self
        return Offset.from_theta(self.theta_coordinate(), self.sign)

    def to_plain(self) -> "Offset":
        v = self.materialize()
        if v is None:
            raise OverflowError("theta-form offset below the materialization limit")
        return Offset.plain(v)


def as_offset(x: Real | Offset) -> Offset:
    return x if isinstance(x, Offset) else Offset.plain(x)


def theta_of(x: Real) -> mpf:
    """log log log (1/|x|)."""
    return Offset.plain(x).theta_coordinate()


def magnitude_from_theta(theta: Real) -> mpf:
    """exp(-exp(exp(theta))) to full relative precision.

    The outer exponential amplifies the absolute error of L1 = exp(exp(theta)),
    so L1 is formed with enough extra bits to be exact to 2^-(prec+16).
    """
    theta = mpf(theta)
    prec = mp.prec
    l2 = mp.exp(theta)
    extra = int(l2 / mp.ln2) + 32 if l2 > 1 else 32
    with mp.workprec(prec + extra):
        l1 = mp.exp(mp.exp(theta))
        return +mp.exp(-l1)


def magnitude_bound_from_theta(theta: Real) -> mpf:
    """Cheap power-of-two upper bound for exp(-exp(exp(theta)))."""
    theta = min(mpf(theta), mpf(THETA_BOUND_MAX))
    l1 = mp.exp(mp.exp(theta))
    bits = int(mp.floor(l1 * (1 - mpf(2) ** -100) / mp.ln2))
    return mp.ldexp(mpf(1), -bits)


def _check_domain(off: Offset, allow_zero: bool) -> None:
    if off.is_zero:
        if not allow_zero:
            raise DomainError("evaluation at offset 0 is undefined")
        return
    if not off.is_theta and off.magnitude >= mp.exp(-1):
        raise DomainError(f"|offset| = {mp.nstr(off.magnitude, 8)} >= 1/e")


def eval_base(off: Real | Offset) -> GuardedValue:
    """w~ at the offset; exactly 0 at 0, odd in the offset."""
    with extended():
        off = as_offset(off)
        _check_domain(off, allow_zero=True)
        if off.is_zero:
            return GuardedValue(mpf(0), mpf(0))
        _, _, theta = off.logs()
        s = off.materialize()
        if s is None:
            # |s| underflows every reasonable format; report the interval
            return GuardedValue(mpf(0), off.magnitude_bound())
        v = s * mp.sin(theta)
        return GuardedValue(v, abs(s) * eps())


def base_correction(l1: mpf, l2: mpf, theta: mpf) -> mpf:
    """cos(theta)/(L2 L1) = cos(theta) e^{-theta - e^theta}, the non-oscillating part of w~'."""
    return mp.cos(theta) / (l1 * l2)


def eval_base_d1(off: Real | Offset) -> GuardedValue:
    """w~'(s) = sin(theta) - cos(theta)/(L2 L1); even in s."""
    with extended():
        off = as_offset(off)
        _check_domain(off, allow_zero=False)
        l1, l2, theta = off.logs()
        v = mp.sin(theta) - base_correction(l1, l2, theta)
        return GuardedValue(v, 2 * eps())


def _d2_numerator(l1: mpf, l2: mpf, theta: mpf) -> mpf:
    # |s| w~''(|s|) (L1 L2)^2 = -(cos(theta) L1 L2 + sin(theta) + cos(theta)(1 + L2))
    c, s = mp.cos(theta), mp.sin(theta)
    return -(c * l1 * l2 + s + c * (1 + l2))


def scaled_d2(off: Real | Offset) -> mpf:
    """|s| * |w~''(s)|, computed from the log chain only."""
    with extended():
        off = as_offset(off)
        _check_domain(off, allow_zero=False)
        l1, l2, theta = off.logs()
        return abs(_d2_numerator(l1, l2, theta)) / (l1 * l2) ** 2


def eval_base_d2(off: Real | Offset) -> GuardedValue:
    """Exact second derivative of w~ (odd in s)."""
    with extended():
        off = as_offset(off)
        _check_domain(off, allow_zero=False)
        s = off.materialize()
        if s is None:
            raise OverflowError("w~'' at a theta offset beyond the materialization limit")
        l1, l2, theta = off.logs()
        v = _d2_numerator(l1, l2, theta) / (abs(s) * (l1 * l2) ** 2)
        v = v if s > 0 else -v
        return GuardedValue(v, abs(v) * eps() + eps() / abs(s))


def d2_majorant_scaled(l1: mpf, l2: mpf) -> mpf:
    """|s| times the displayed majorant of |w~''|."""
    return (1 + (2 + l2) / (l2 * l1)) / (l2 * l1)


def eval_base_d2_bound(off: Real | Offset) -> mpf:
    """1/(|s| L2 L1) (1 + (2 + L2)/(L2 L1)), rounded upward."""
    with extended():
        off = as_offset(off)
        _check_domain(off, allow_zero=False)
        s = off.materialize()
        if s is None:
            raise OverflowError("majorant at a theta offset beyond the materialization limit")
        l1, l2, _ = off.logs()
        return d2_majorant_scaled(l1, l2) / abs(s) * (1 + eps())


def eval_base_d3_bound(off: Real | Offset) -> mpf:
    """Crude upper bound for |w~'''| (used for Taylor remainders only).

    With N = cos L1L2 + sin + cos(1+L2) and D = |s|(L1L2)^2 we have
    w~'' = -N/D; |N'| <= (5+L2)/|s| and |D'| <= (L1L2)^2 + 2L1L2(1+L2).
    """
    with extended():
        off = as_offset(off)
        _check_domain(off, allow_zero=False)
        s = abs(off.materialize())
        l1, l2, _ = off.logs()
        p = l1 * l2
        n_max = p + 2 + l2
        bound = (5 + l2) / (s * s * p * p) + n_max * (p * p + 2 * p * (1 + l2)) / (s * s * p**4)
        return bound * 2


def _psi1_from_logs(l1: mpf) -> mpf:
    # |s| psi^1(s) = 402 / log log (1/(5|s|))
    inner = l1 - mp.log(5)
    if inner <= 1:
        raise DomainError("psi^1 needs 5|t| < 1/e")
    return 402 / mp.log(inner)


def _normalize_part(part) -> str:
    if part in (1, "1"):
        return "1"
    if part in (2, "2"):
        return "2"
    if part in ("both", 3, "3", None):
        return "both"
    raise ValueError(f"part must be 1, 2 or 'both', got {part!r}")


def t_psi(off: Real | Offset, part="both") -> GuardedValue:
    """|s| psi(s) computed from the log chain (finite for every offset).

    For a theta offset the term 3|s| of |s| psi^2 is replaced by its bound
    and moved into abs_error.
    """
    part = _normalize_part(part)
    with extended():
        off = as_offset(off)
        if off.is_zero:
            return GuardedValue(mpf(0), mpf(0))
        _check_domain(off, allow_zero=False)
        l1, l2, theta = off.logs()
        val, err = mpf(0), mpf(0)
        if part in ("1", "both"):
            val += _psi1_from_logs(l1)
        if part in ("2", "both"):
            val += 4 * abs(_d2_numerator(l1, l2, theta)) / (l1 * l2) ** 2
            if off.is_theta:
                err += 3 * off.magnitude_bound()
            else:
                val += 3 * off.magnitude
        return GuardedValue(val, err + abs(val) * eps())


def t_psi_majorant(l1: mpf, l2: mpf, s: mpf | None) -> mpf:
    """Upper bound of |s| psi(s) using the d2 majorant; s=None drops 3|s|."""
    v = _psi1_from_logs(l1) + 4 * d2_majorant_scaled(l1, l2)
    if s is not None:
        v += 3 * abs(s)
    return v


def psi(off: Real | Offset, part="both") -> GuardedValue:
    """psi^1 = 402/(|t| log log 1/(5|t|)), psi^2 = 3 + 4|w~''|; psi(0) = 0."""
    part = _normalize_part(part)
    with extended():
        off = as_offset(off)
        if off.is_zero:
            return GuardedValue(mpf(0), mpf(0))
        _check_domain(off, allow_zero=False)
        if part in ("1", "both") and not off.is_theta and 5 * off.magnitude >= mp.exp(-1):
            raise DomainError("psi^1 needs 5|t| < 1/e")
        s = off.materialize()
        if s is None:
            raise OverflowError("psi at a theta offset beyond the materialization limit")
        s = abs(s)
        l1, l2, theta = off.logs()
        val = mpf(0)
        if part in ("1", "both"):
            val += _psi1_from_logs(l1) / s
        if part in ("2", "both"):
            val += 3 + 4 * abs(_d2_numerator(l1, l2, theta)) / (s * (l1 * l2) ** 2)
        return GuardedValue(val, abs(val) * eps())


# relative over-approximation added to the sampled sup defining C
C_MARGIN = mpf("1e-6")


@lru_cache(maxsize=8)
def _constant_c(prec: int, samples: int) -> mpf:
    with mp.workprec(prec):
        T = half_width()

        def f(s):
            return t_psi(s).value

        # geometric sweep down to 1e-300 plus a uniform sweep near T, where the
        # sup sits (|t| psi^1 grows like 402/log log(1/5|t|))
        pts = [T * mp.power(mpf(10), -mpf(300) * k / samples) for k in range(samples + 1)]
        pts += [T * k / samples for k in range(1, samples + 1)]
        best_s = max(pts, key=f)
        best = f(best_s)
        # golden-section refinement on the bracketing cell
        lo, hi = best_s * (1 - mpf(2) / samples), min(T, best_s * (1 + mpf(2) / samples))
        g = (mp.sqrt(5) - 1) / 2
        a, b = lo, hi
        for _ in range(60):
            c, d = b - g * (b - a), a + g * (b - a)
            if f(c) > f(d):
                b = d
            else:
                a = c
        best = max(best, f((a + b) / 2), f(T))
        return 1 + 5 * best * (1 + C_MARGIN)


def constant_C(samples: int = 2048) -> mpf:
    """C = 1 + sup_{|t| <= T} 5|t| psi(t), sampled sup plus a relative margin."""
    with extended():
        return _constant_c(mp.prec, samples)


def fmt(x: Real, digits: int = 6) -> str:
    """Readable text for any mpf; exp(-exp(lam)) form beyond decimal range.

    mp.nstr is quadratic in the exponent size and unusable for schedule
    constants such as T_6, whose binary exponent has ~180k bits.
    """
    x = mpf(x)
    if x == 0 or not mp.isfinite(x):
        return str(x)
    if abs(mp.mag(x)) < 4_000:
        return mp.nstr(x, digits)
    with mp.workprec(64):
        a = abs(x)
        sign = "-" if x < 0 else ""
        if a < 1:
            return f"{sign}exp(-exp({mp.nstr(mp.log(-mp.log(a)), digits + 4)}))"
        return f"{sign}exp(exp({mp.nstr(mp.log(mp.log(a)), digits + 4)}))"

