"""Weight functions phi~_n = phi~_n^1 + phi~_n^2 and the truncated sum phi_N.

phi~_n is capped at |y| = 5|t - x_n| inside Y_n and frozen at the value of
the Y_n endpoint outside it.  For n >= 1 the frozen slope psi_n(x_n + T_n)
is astronomically large but 5 T_n is far below double range, so for any
representable y != 0 the frozen part equals the constant
kappa_n = 5 T_n psi_n(x_n + T_n) < 2^-n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from mpmath import mp, mpf

from . import kernels
from .construction import ConstructionSchedule
from .special_functions import (
    DomainError,
    GuardedValue,
    Offset,
    as_offset,
    compact_repr,
    eps,
    half_width,
    psi,
    t_psi,
)

PARTS = ("1", "2")


def _parts(part) -> tuple[str, ...]:
    if part in ("both", None, 3, "3"):
        return PARTS
    if part in (1, "1"):
        return ("1",)
    if part in (2, "2"):
        return ("2",)
    raise ValueError(f"part must be 1, 2 or 'both', got {part!r}")


@dataclass(frozen=True)
class _Frozen:
    __repr__ = compact_repr
    slope: dict  # part -> psi_n^i(x_n + T_n)
    cap: mpf  # 5 T_n
    kappa: dict  # part -> 5 T_n psi_n^i(x_n + T_n)


@dataclass
class WeightFunction:
    """phi_N for a built schedule; evaluation is pure after construction."""

    __repr__ = compact_repr

    schedule: ConstructionSchedule
    N: int | None = None
    _frozen: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if self.N is None:
            self.N = self.schedule.depth
        if not 0 <= self.N <= self.schedule.depth:
            raise ValueError(f"depth {self.N} not built (0..{self.schedule.depth})")
        with mp.workprec(self.schedule.prec):
            for st in self.schedule.stages:
                slope = {p: psi(st.T, p).value for p in PARTS}
                kappa = {p: 5 * t_psi(st.T, p).value for p in PARTS}
                self._frozen.append(_Frozen(slope, 5 * st.T, kappa))

    @property
    def tail_bound(self) -> mpf:
        return mpf(2) ** -self.N

    def kappa(self, n: int, part="both") -> mpf:
        """Value of phi~_n off Y_n once |y| >= 5 T_n."""
        return sum((self._frozen[n].kappa[p] for p in _parts(part)), mpf(0))

    def frozen_total(self, N: int | None = None, part="both", start: int = 1) -> mpf:
        N = self.N if N is None else N
        return sum((self.kappa(n, part) for n in range(start, N + 1)), mpf(0))

    # ---- single stage

    def _offset(self, n: int, t) -> Offset | None:
        """t - x_n as an Offset when t lies in Y_n, else None."""
        st = self.schedule.stages[n]
        if isinstance(t, tuple):
            j, s = t
            s = as_offset(s)
            if j == n:
                if s.is_theta or s.magnitude <= st.T:
                    return s
                return None
            t = self.schedule.anchors[j] + s.sign * s.magnitude_bound() if s.is_theta else \
                self.schedule.anchors[j] + s.sign * s.magnitude
        d = mpf(t) - st.x
        if n == 0 or abs(d) <= st.T:
            return Offset.plain(d)
        return None

    def tilde(self, n: int, t, y, part="both") -> mpf:
        """phi~_n(t, y), or phi~_n^i for part i."""
        with mp.workprec(self.schedule.prec):
            y = abs(mpf(y))
            s = self._offset(n, t)
            if s is None:
                fr = self._frozen[n]
                return sum((fr.slope[p] * min(y, fr.cap) for p in _parts(part)), mpf(0))
            if s.is_zero or y == 0:
                return mpf(0)
            if s.is_theta:
                raise DomainError("phi~_n at a theta offset: use t_psi bounds (value <= 5|s| psi)")
            a = s.magnitude
            if y >= 5 * a:
                return sum((5 * t_psi(s, p).value for p in _parts(part)), mpf(0))
            return sum((psi(s, p).value * y for p in _parts(part)), mpf(0))

    # ---- truncated sum

    def phi(self, t, y, N: int | None = None, part="both") -> GuardedValue:
        """phi_N(t, y) = sum_{i<=N} phi~_i(t, y); abs_error includes the 2^-N tail."""
        N = self.N if N is None else N
        if not 0 <= N <= self.schedule.depth:
            raise ValueError(f"depth {N} not built")
        self._check_t(t)
        with mp.workprec(self.schedule.prec):
            v = mpf(0)
            for n in range(N + 1):
                v += self.tilde(n, t, y, part)
            return GuardedValue(v, abs(v) * eps() + mpf(2) ** -N)

    def _check_t(self, t) -> None:
        if isinstance(t, tuple):
            return
        with mp.workprec(self.schedule.prec):
            if abs(mpf(t)) > half_width() * (1 + mpf(2) ** -100):
                raise DomainError("t outside [-T, T]")

    def _stage_lipschitz(self, t, N, y, radius) -> list:
        """[(i, L_i)] for the stages that can vary on [y - radius, y + radius]; None at an anchor."""
        self._check_t(t)
        out = []
        floor = None if y is None else abs(mpf(y)) - mpf(radius)
        for i in range(N + 1):
            st = self.schedule.stages[i]
            if floor is not None and i > 0 and floor >= self._frozen[i].cap and self._offset(i, t) is None:
                continue
            if isinstance(t, tuple):
                j, s = t
                s = as_offset(s)
                if j == i and (s.is_zero or s.is_theta):
                    return None
                d = s.sign * s.magnitude + self.schedule.anchors[j] - st.x
            else:
                d = mpf(t) - st.x
            if d == 0:
                return None
            out.append((i, max(psi(d).value, self._frozen[i].slope["1"] + self._frozen[i].slope["2"])))
        return out

    def lipschitz_y(self, t, N: int | None = None, y=None, radius=0) -> mpf:
        """sum_{i<=N} max(psi_i(t), psi_i(x_i + T_i)); +inf at an anchor.

        With y given, the bound is local to [y - radius, y + radius]: a stage
        whose cap 5 T_i lies below |y| - radius is constant there and drops out.
        """
        N = self.N if N is None else N
        with mp.workprec(self.schedule.prec):
            stages = self._stage_lipschitz(t, N, y, radius)
            return mp.inf if stages is None else sum((L for _, L in stages), mpf(0))

    def variation_y(self, t, y, radius, N: int | None = None) -> mpf:
        """Bound on |phi_N(t, y') - phi_N(t, y)| for |y' - y| <= radius.

        Each stage moves by at most min(L_i radius, sup_y phi~_i(t, .)), which
        keeps the bound finite where the sub-resolution slopes are astronomic.
        """
        N = self.N if N is None else N
        with mp.workprec(self.schedule.prec):
            stages = self._stage_lipschitz(t, N, y, radius)
            if stages is None:
                return mp.inf
            total = mpf(0)
            for i, L in stages:
                step = L * mpf(radius)
                if not isinstance(t, tuple):
                    step = min(step, self.tilde(i, t, 1))  # y = 1 exceeds every cap
                total += step
            return total

    # ---- double-precision fast path (quadrature)

    def phi0_double(self, t, y, part: int = 3) -> np.ndarray:
        """phi~_0 at double arguments."""
        return kernels.phi0(t, y, part)

    def frozen_double(self, y, N: int | None = None, part="both") -> np.ndarray:
        """sum_{1<=n<=N} phi~_n at double t off the Y_n (all double t != x_n) and y."""
        k = float(self.frozen_total(N, part))
        y = np.asarray(y, dtype=float)
        return np.where(y != 0, k, 0.0)


def phi(wf: WeightFunction, t, y, N: int | None = None, part="both") -> GuardedValue:
    return wf.phi(t, y, N, part)


def phi_lipschitz_y(wf: WeightFunction, t, N: int | None = None) -> mpf:
    return wf.lipschitz_y(t, N)
