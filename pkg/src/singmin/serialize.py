"""JSON round-trip for schedules and stage profiles.

Numbers are written so that loading reproduces the identical mpf:

* ordinary magnitudes as the shortest decimal string that parses back to
  the same mpf at the file precision;
* magnitudes whose binary exponent is too large for a decimal rendering
  (T_n, R_n for n >= 1) as "<hex mantissa>p<hex exponent>", meaning
  mantissa * 2^exponent.

Big integers (m_n) are hex strings for the same reason.  Theta-form offsets
are objects {"theta": <number>, "sign": +-1}.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path
from typing import Any

from mpmath import mp, mpf
from mpmath.libmp import from_man_exp

from .construction import (
    AlphaTau,
    Certificate,
    Construction,
    ConstructionSchedule,
    LocalJet,
    StageProfile,
    StageRecord,
)
from .special_functions import Offset

FORMAT_VERSION = 1
_DECIMAL_EXP_LIMIT = 4096
_BIN_RE = re.compile(r"^(-?)0x([0-9a-f]+)p([+-])0x([0-9a-f]+)$")


class FormatError(ValueError):
    pass


# ------------------------------------------------------------------ scalars


def encode_mpf(x) -> str | None:
    if x is None:
        return None
    x = mpf(x)
    if x == 0:
        return "0"
    if not mp.isfinite(x):
        return str(x)
    sign, man, exp, bc = x._mpf_
    if abs(exp) + bc < _DECIMAL_EXP_LIMIT and bc <= mp.prec:
        # shortest decimal that parses back to x at the working precision
        for digits in range(int(bc * math.log10(2)) + 1, int(mp.prec * math.log10(2)) + 4):
            s = mp.nstr(x, digits, strip_zeros=True, min_fixed=-6, max_fixed=12)
            if mpf(s) == x:
                return s
    return f"{'-' if sign else ''}{man:#x}p{'-' if exp < 0 else '+'}{abs(exp):#x}"


def decode_mpf(s: str | None):
    if s is None:
        return None
    m = _BIN_RE.match(s)
    if m is None:
        return mpf(s)  # decimal, rounded at the working precision
    neg, man, esign, exp = m.groups()
    e = int(exp, 16)
    if esign == "-":
        e = -e
    return mpf(from_man_exp(-int(man, 16) if neg else int(man, 16), e))


def encode_int(v: int | None) -> str | None:
    return None if v is None else hex(v)


def decode_int(s: str | None) -> int | None:
    return None if s is None else int(s, 16)


def encode_offset(o: Offset) -> dict:
    if o.is_theta:
        return {"theta": encode_mpf(o.theta), "sign": o.sign}
    return {"magnitude": encode_mpf(o.magnitude), "sign": o.sign}


def decode_offset(d: dict) -> Offset:
    if "theta" in d:
        return Offset(int(d["sign"]), None, decode_mpf(d["theta"]))
    return Offset(int(d["sign"]), decode_mpf(d["magnitude"]))


# ------------------------------------------------------------------ records


def _cert(c: Certificate) -> dict:
    return {"name": c.name, "stage": c.stage, "lhs": encode_mpf(c.lhs), "rhs": encode_mpf(c.rhs),
            "relation": c.relation, "passed": c.passed, "margin": encode_mpf(c.margin), "note": c.note}


def _uncert(d: dict) -> Certificate:
    return Certificate(d["name"], d["stage"], decode_mpf(d["lhs"]), decode_mpf(d["rhs"]),
                       d["relation"], d["passed"], decode_mpf(d["margin"]), d.get("note", ""))


_STAGE_MPF = ("x", "sigma", "K", "T", "eps", "R", "G_radius", "M")


def schedule_to_dict(s: ConstructionSchedule) -> dict:
    with mp.workprec(s.prec):
        return _schedule_to_dict(s)


def _schedule_to_dict(s: ConstructionSchedule) -> dict:
    stages = []
    for st in s.stages:
        d: dict[str, Any] = {"n": st.n}
        d.update({k: encode_mpf(getattr(st, k)) for k in _STAGE_MPF})
        d.update(m=encode_int(st.m), G_count=st.G_count, T_binding=st.T_binding, R_binding=st.R_binding)
        stages.append(d)
    return {
        "format": "singmin-schedule",
        "version": FORMAT_VERSION,
        "prec": s.prec,
        "depth": s.depth,
        "C": encode_mpf(s.C),
        "anchors": [encode_mpf(x) for x in s.anchors],
        "stages": stages,
        "certificates": [_cert(c) for c in s.certificates],
    }


def _check_header(d: dict, kind: str) -> None:
    if d.get("format") != kind:
        raise FormatError(f"expected format {kind!r}, got {d.get('format')!r}")
    if d.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported version {d.get('version')!r}")


def schedule_from_dict(d: dict) -> ConstructionSchedule:
    _check_header(d, "singmin-schedule")
    prec = int(d["prec"])
    with mp.workprec(prec):
        stages = []
        for e in d["stages"]:
            kw = {k: decode_mpf(e[k]) for k in _STAGE_MPF}
            stages.append(StageRecord(n=e["n"], m=decode_int(e["m"]), G_count=e["G_count"],
                                      T_binding=e["T_binding"], R_binding=e["R_binding"], **kw))
        return ConstructionSchedule(
            tuple(decode_mpf(x) for x in d["anchors"]), int(d["depth"]), prec, decode_mpf(d["C"]),
            tuple(stages), tuple(_uncert(c) for c in d["certificates"]))


_PROFILE_MPF = ("x", "T", "R", "alpha", "beta", "theta_tau", "m", "delta_l", "delta_r",
                "c_l", "c_r", "d_l", "d_r", "c_tau", "c_tau_err")
_AT_MPF = ("alpha", "rho_excess", "A_excess", "B_excess", "residual", "witness_y", "witness_z")


def profile_to_dict(p: StageProfile) -> dict:
    d: dict[str, Any] = {"n": p.n}
    d.update({k: encode_mpf(getattr(p, k)) for k in _PROFILE_MPF})
    d["tau"] = encode_offset(p.tau)
    d["jet"] = None if p.jet is None else {k: encode_mpf(getattr(p.jet, k)) for k in ("value", "slope", "curv", "d3")}
    if p.alpha_tau is None:
        d["alpha_tau"] = None
    else:
        at = {k: encode_mpf(getattr(p.alpha_tau, k)) for k in _AT_MPF}
        at["tau"] = encode_offset(p.alpha_tau.tau)
        d["alpha_tau"] = at
    d["certificates"] = [_cert(c) for c in p.certificates]
    return d


def profile_from_dict(d: dict) -> StageProfile:
    kw = {k: decode_mpf(d[k]) for k in _PROFILE_MPF}
    jet = None if d["jet"] is None else LocalJet(**{k: decode_mpf(v) for k, v in d["jet"].items()})
    at = None
    if d["alpha_tau"] is not None:
        a = d["alpha_tau"]
        at = AlphaTau(tau=decode_offset(a["tau"]), **{k: decode_mpf(a[k]) for k in _AT_MPF})
    return StageProfile(n=d["n"], tau=decode_offset(d["tau"]), jet=jet, alpha_tau=at,
                        certificates=tuple(_uncert(c) for c in d["certificates"]), **kw)


def construction_to_dict(con: Construction) -> dict:
    with mp.workprec(con.prec):
        return _construction_to_dict(con)


def _construction_to_dict(con: Construction) -> dict:
    return {
        "format": "singmin-profiles",
        "version": FORMAT_VERSION,
        "prec": con.prec,
        "depth": con.depth,
        "profiles": [profile_to_dict(p) for p in con.profiles],
    }


# ------------------------------------------------------------------ files


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=1) + "\n"


def save_schedule(s: ConstructionSchedule, path: str | Path) -> None:
    Path(path).write_text(dumps(schedule_to_dict(s)))


def load_schedule(path: str | Path) -> ConstructionSchedule:
    return schedule_from_dict(json.loads(Path(path).read_text()))


def save_construction(con: Construction, schedule_path: str | Path, profiles_path: str | Path) -> None:
    save_schedule(con.schedule, schedule_path)
    Path(profiles_path).write_text(dumps(construction_to_dict(con)))


def load_construction(schedule_path: str | Path, profiles_path: str | Path) -> Construction:
    sched = load_schedule(schedule_path)
    d = json.loads(Path(profiles_path).read_text())
    _check_header(d, "singmin-profiles")
    if d["depth"] != sched.depth or d["prec"] != sched.prec:
        raise FormatError("profiles do not match the schedule (depth/precision)")
    with mp.workprec(sched.prec):
        profiles = tuple(profile_from_dict(p) for p in d["profiles"])
    return Construction(sched, profiles)
