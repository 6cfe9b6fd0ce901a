"""Command-line front end: construct, eval, minimize, probe, verify.

Exit codes: 0 ok, 1 usage or input error, 2 certificate/invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path

from mpmath import mp, mpf

from . import BACKEND
from .construction import CertificateError, build_construction, certify_schedule, certify_stage
from .functional import Problem, QuadOptions, approx_jump_check, lagrangian, w_interpolant
from .serialize import FormatError, dumps, load_construction, save_construction, construction_to_dict, schedule_to_dict
from .special_functions import DEFAULT_PREC, T_FLOAT, DomainError, Offset, fmt, half_width

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2
SCHEDULE, PROFILES = "schedule.json", "profiles.json"


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class RunConfig:
    anchors: str = "dyadic"  # "dyadic" or a comma list starting with 0
    depth: int = 6
    precision: int = DEFAULT_PREC
    samples: int = 10_000
    quad_tol: float = 1e-10
    quad_max_depth: int = 40
    grid: int = 256
    starts: int = 4
    seed: int = 0
    workers: int = 1
    competitors: int = 24
    slice_y: float = 1e-3
    out: str = "out"
    format: str = "csv"

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_show(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        vals = {}
        for i, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {i}: expected 'key = value'")
            k, v = (p.strip() for p in line.split("=", 1))
            if k not in kinds:
                raise UsageError(f"config line {i}: unknown key {k!r}")
            if k in vals:
                raise UsageError(f"config line {i}: duplicate key {k!r}")
            vals[k] = _parse(kinds[k], v, k)
        return cls(**vals).validated()

    def validated(self) -> "RunConfig":
        if self.depth < 0:
            raise UsageError("depth must be >= 0")
        if self.precision < 53:
            raise UsageError("precision must be at least 53 bits")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must be an unsigned 64-bit integer")
        if self.grid < 2:
            raise UsageError("grid needs at least 2 nodes")
        if self.starts < 1 or self.workers < 1 or self.samples < 1:
            raise UsageError("starts, workers and samples must be positive")
        self.anchor_values()
        return self

    def anchor_values(self):
        if self.anchors == "dyadic":
            return None
        try:
            xs = [mpf(a) for a in self.anchors.split(",")]
        except (ValueError, TypeError) as e:
            raise UsageError(f"anchors: {e}") from None
        if len(set(xs)) != len(xs):
            raise UsageError("anchors: duplicate entries")
        return xs


def _show(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _parse(kind, v: str, key: str):
    try:
        if kind in (int, "int"):
            return int(v, 0)
        if kind in (float, "float"):
            return float(v)
        return v
    except ValueError:
        raise UsageError(f"{key}: cannot parse {v!r}") from None


# ------------------------------------------------------------------ output helpers


def num(x) -> str:
    """Shortest exact double repr when x is a normal double, else the scale form."""
    if x is None:
        return ""
    x = mpf(x)
    if x == 0 or 1e-300 < abs(x) < 1e300:
        return repr(float(x))
    return fmt(x)


def _write(out: Path, stem: str, rows: list[dict], fmt_: str, extra: dict | None = None) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    if fmt_ == "json":
        p = out / f"{stem}.json"
        p.write_text(json.dumps({"rows": rows, **(extra or {})}, indent=1) + "\n")
    else:
        p = out / f"{stem}.csv"
        buf = io.StringIO()
        keys = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        p.write_text(buf.getvalue())
    return p


def _load(cfg: RunConfig) -> Problem:
    out = Path(cfg.out)
    for name in (SCHEDULE, PROFILES):
        if not (out / name).exists():
            raise UsageError(f"missing {out / name}; run 'singmin construct' first")
    try:
        con = load_construction(out / SCHEDULE, out / PROFILES)
    except (FormatError, KeyError, ValueError) as e:
        raise UsageError(f"cannot read artifacts: {e}") from None
    if cfg.depth > con.depth:
        raise UsageError(f"artifacts have depth {con.depth} < requested {cfg.depth}")
    return Problem(con)


def _same_precision(cfg: RunConfig, problem: Problem, explicit: bool) -> None:
    if explicit and cfg.precision != problem.schedule.prec:
        raise UsageError(f"artifacts were built at {problem.schedule.prec} bits; rebuild with --precision {cfg.precision}")


def _cert_rows(certs) -> list[dict]:
    return [{"name": c.name, "stage": c.stage, "relation": c.relation, "lhs": num(c.lhs), "rhs": num(c.rhs),
             "margin": num(c.margin), "passed": c.passed, "note": c.note} for c in certs]


# ------------------------------------------------------------------ commands


def cmd_construct(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    t0 = time.perf_counter()
    try:
        con = build_construction(cfg.anchor_values(), cfg.depth, cfg.precision, cfg.samples)
    except CertificateError as e:
        _write(out, "certificates", _cert_rows(e.failures), cfg.format)
        print(f"FAIL {e}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as e:
        raise UsageError(str(e)) from None
    out.mkdir(parents=True, exist_ok=True)
    save_construction(con, out / SCHEDULE, out / PROFILES)
    (out / "config.txt").write_text(cfg.to_text())
    certs = list(con.schedule.certificates) + [c for p in con.profiles for c in p.certificates]
    path = _write(out, "certificates", _cert_rows(certs), cfg.format)
    bad = [c for c in certs if not c.passed]
    print(f"built depth {cfg.depth} at {cfg.precision} bits in {time.perf_counter() - t0:.1f}s; "
          f"{len(certs) - len(bad)}/{len(certs)} certificates passed -> {path}")
    if bad:
        print("FAIL " + ", ".join(f"{c.name}[n={c.stage}]" for c in bad), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _parse_points(spec: str | None) -> list:
    if not spec:
        return []
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        if tok in ("T", "+T"):
            out.append(half_width())
        elif tok == "-T":
            out.append(-half_width())
        else:
            try:
                out.append(mpf(tok))
            except (ValueError, TypeError):
                raise UsageError(f"bad point {tok!r}") from None
    return out


def cmd_eval(cfg: RunConfig, args) -> int:
    problem = _load(cfg)
    _same_precision(cfg, problem, args.precision is not None)
    con, N = problem.construction, cfg.depth
    rows = []
    with mp.workprec(problem.schedule.prec):
        anchors = problem.schedule.anchors[: N + 1]
        for t in _parse_points(args.t):
            try:
                w = con.eval_w(t, N)
            except DomainError as e:
                raise UsageError(str(e)) from None
            row = {"kind": "t", "t": num(t), "w": num(w.value), "w_err": num(w.abs_error)}
            y = w.value + mpf(cfg.slice_y)
            if any(t == x for x in anchors):
                row.update({"w_prime": "", "w_prime_err": "", "w_prime_defined": False})
                p = None
            else:
                d = con.eval_w_prime(t, N)
                row.update({"w_prime": num(d.value), "w_prime_err": num(d.abs_error), "w_prime_defined": True})
                p = d.value
            ph = problem.weight.phi(t, mpf(cfg.slice_y), N)
            row.update({"slice_y": num(cfg.slice_y), "phi": num(ph.value), "phi_err": num(ph.abs_error)})
            if p is not None:
                L = lagrangian(problem, t, y, p, N)
                row.update({"L": num(L.value), "L_err": num(L.abs_error)})
            rows.append(row)
        thetas = _parse_points(args.theta)
        if thetas:
            n = args.anchor
            if not 0 <= n <= N:
                raise UsageError(f"--anchor must lie in 0..{N}")
            prof = con.profiles[n]
            for th in thetas:
                for sign in (1, -1):
                    s = Offset.from_theta(th, sign)
                    reg = prof.region(s)
                    inc = con.increment(n, s, N)
                    q = prof.alpha * mp.sin(th) if reg == "scaled" else (prof.m if reg == "affine" and n else None)
                    rows.append({"kind": "theta", "anchor": n, "theta": num(th), "sign": sign, "region": reg,
                                 "offset_bound": fmt(s.magnitude_bound()), "increment_bound": fmt(inc.abs_error + abs(inc.value)),
                                 "quotient": num(q), "quotient_exact": reg == "scaled"})
    if not rows:
        raise UsageError("eval needs --t and/or --theta")
    path = _write(Path(cfg.out), "eval", rows, cfg.format)
    print(f"{len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_minimize(cfg: RunConfig, args) -> int:
    from .solver import SolveOptions, minimize_direct

    problem = _load(cfg)
    _same_precision(cfg, problem, args.precision is not None)
    rep = minimize_direct(problem, cfg.grid, cfg.depth, cfg.starts, cfg.seed, SolveOptions(workers=cfg.workers),
                          QuadOptions(cfg.quad_tol, cfg.quad_max_depth))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.format == "json":
        path = out / "solve.json"
        path.write_text(rep.to_json())
    else:
        path = out / "solve.csv"
        path.write_text(rep.to_csv())
    print(f"best {rep.best.label}: value {rep.value.value!r} +- {rep.value.total_error:.3g}, "
          f"sup|u - w| = {rep.sup_distance:.3g} -> {path}")
    return EXIT_OK


def cmd_probe(cfg: RunConfig, args) -> int:
    from .analysis import dini_probe

    problem = _load(cfg)
    _same_precision(cfg, problem, args.precision is not None)
    ns = args.n if args.n else list(range(cfg.depth + 1))
    rows, reports = [], []
    for n in ns:
        if not 0 <= n <= cfg.depth:
            raise UsageError(f"anchor {n} not built at depth {cfg.depth}")
        r = dini_probe(problem, n, cfg.depth)
        reports.append(r.as_dict())
        rows.append({"n": n, "alpha": num(r.alpha), "theta_tau": num(r.theta_tau), "theta_plus": num(r.theta_plus),
                     "theta_minus": num(r.theta_minus), "quotient_plus": num(r.quotient_plus),
                     "quotient_minus": num(r.quotient_minus), "residual": num(r.residual)})
    path = _write(Path(cfg.out), "probe", rows, cfg.format, {"reports": reports})
    bad = [r for r in reports if not (r["quotient_plus"] >= 1 and r["quotient_minus"] <= -1)]
    print(f"{len(rows)} probes -> {path}")
    return EXIT_FAIL if bad else EXIT_OK


def _row(check: str, stage, lhs, rhs, passed: bool, margin, note: str = "") -> dict:
    return {"check": check, "stage": stage, "lhs": num(lhs), "rhs": num(rhs), "passed": bool(passed),
            "margin": num(margin), "note": note}


def run_verify(problem: Problem, cfg: RunConfig, precision: int | None = None) -> list[dict]:
    """Every module's invariant checks as report rows."""
    from .analysis import (
        AnchoredTrial, PlainTrial, anchored_quotients, audit_competitor, dini_probe, lifted_competitor,
        lipschitz_scan, sigma_membership,
    )
    from .solver import competitor_suite, minimality_check

    sched, con, N = problem.schedule, problem.construction, cfg.depth
    rows = []
    # certificates, re-evaluated (optionally at another precision)
    prec = precision or sched.prec
    certs = certify_schedule(sched, prec, cfg.samples)
    for p in con.profiles[1:]:
        certs += certify_stage(sched, p)
    rows += [_row(f"cert:{c.name}", c.stage, c.lhs, c.rhs, c.passed, c.margin, c.note) for c in certs]
    # serialization round trip
    out = Path(cfg.out)
    same = (dumps(schedule_to_dict(sched)) == (out / SCHEDULE).read_text()
            and dumps(construction_to_dict(con)) == (out / PROFILES).read_text())
    rows.append(_row("roundtrip", "", 0, 0, same, 0, "re-serialized artifacts are byte-identical"))
    with mp.workprec(sched.prec):
        for n in range(N + 1):
            r = dini_probe(problem, n, N)
            ok = r.quotient_plus >= 1 and r.quotient_minus <= -1 and r.quotient_plus == -r.quotient_minus
            rows.append(_row("dini", n, r.quotient_plus, r.quotient_minus, ok, r.quotient_plus - 1,
                             f"theta+={fmt(r.theta_plus)} theta-={fmt(r.theta_minus)}"))
            for k in (1, 10, 10**6):
                s = sigma_membership(problem, (n, 0), k, N)
                rows.append(_row("sigma", n, k, 0, s.plus and s.minus, 1.0 / k - max(s.margin_plus, s.margin_minus)))
        lip = lipschitz_scan(problem.w_double, seed=cfg.seed)
        rows.append(_row("lipschitz", "", lip, 2 + 1e-9, lip <= 2 + 1e-9, 2 - lip, "sampled double-scale pairs"))
        for n in range(1, min(N, 2) + 1):
            q = anchored_quotients(problem, n, N, samples=12)
            lim = 2 - sched.stages[n].eps
            rows.append(_row("lipschitz_anchored", n, q, lim, q <= lim + mpf("1e-9"), lim - q))
    audits = [audit_competitor(problem, PlainTrial(problem, lifted_competitor(problem, 6 * T_FLOAT, 1024), 0), N)]
    audits.append(audit_competitor(problem, PlainTrial(problem, w_interpolant(problem, 1024), 0), N))
    if N >= 1:
        audits.append(audit_competitor(problem, AnchoredTrial(problem, 1, mpf("0.3") * sched.stages[1].T), N))
    for a in audits:
        for c in a.checks:
            rows.append(_row(f"audit:{c.name}", a.n, c.lhs, c.rhs, c.passed, c.margin, c.note))
    quad = QuadOptions(cfg.quad_tol, cfg.quad_max_depth)
    u = w_interpolant(problem, 512)
    for n in range(N):
        j = approx_jump_check(problem, u, n, N, quad)
        rows.append(_row("jump", n, j.analytic_bound, j.threshold, j.passed, j.relative_margin,
                         f"observed gap {j.gap:.3g}"))
    comps = competitor_suite(problem, count=cfg.competitors, seed=cfg.seed, M=512)
    for r in minimality_check(problem, comps, N, quad):
        rows.append(_row("minimality", "", r["value"], r["w_value"], r["ok"], r["slack"], r["label"]))
    return rows


def cmd_verify(cfg: RunConfig, args) -> int:
    problem = _load(cfg)
    t0 = time.perf_counter()
    rows = run_verify(problem, cfg, args.precision)
    bad = [r for r in rows if not r["passed"]]
    path = _write(Path(cfg.out), "verify", rows, cfg.format, {"backend": BACKEND})
    print(f"{len(rows) - len(bad)}/{len(rows)} checks passed in {time.perf_counter() - t0:.1f}s -> {path}")
    for r in bad:
        print(f"FAIL {r['check']} stage={r['stage']} lhs={r['lhs']} rhs={r['rhs']}", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


# ------------------------------------------------------------------ entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' file")
    common.add_argument("--out", help="artifact/output directory")
    common.add_argument("--depth", type=int)
    common.add_argument("--precision", type=int, help="working precision in bits")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("csv", "json"))
    p = _Parser(prog="singmin", description="Singular minimizer construction and checks")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("construct", parents=[common], help="build and certify the schedule and stage profiles")
    e = sub.add_parser("eval", parents=[common], help="evaluate w, w', phi and L at points")
    e.add_argument("--t", help="comma list of points (T and -T accepted)")
    e.add_argument("--theta", help="comma list of theta coordinates around --anchor")
    e.add_argument("--anchor", type=int, default=0)
    m = sub.add_parser("minimize", parents=[common], help="direct-method multi-start solve")
    m.add_argument("--grid", type=int)
    m.add_argument("--starts", type=int)
    pr = sub.add_parser("probe", parents=[common], help="Dini-derivative witnesses at anchors")
    pr.add_argument("n", type=int, nargs="*")
    sub.add_parser("verify", parents=[common], help="re-run every invariant check on built artifacts")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            cfg = RunConfig.from_text(Path(args.config).read_text())
        except OSError as e:
            raise UsageError(f"config: {e}") from None
    over = {k: getattr(args, k) for k in ("out", "depth", "precision", "seed", "format", "grid", "starts")
            if getattr(args, k, None) is not None}
    return replace(cfg, **over).validated()


COMMANDS = {"construct": cmd_construct, "eval": cmd_eval, "minimize": cmd_minimize, "probe": cmd_probe,
            "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as e:
        print(f"singmin: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
