import csv
import json
import subprocess
import sys

import pytest

from singmin.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, RunConfig, UsageError, main


def _csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_roundtrip():
    cfg = RunConfig(depth=3, seed=7, anchors="0,0.01,-0.01", quad_tol=1e-9, format="json")
    assert RunConfig.from_text(cfg.to_text()) == cfg
    assert RunConfig.from_text("# defaults\n\n") == RunConfig()


@pytest.mark.parametrize("text", ["depth = 2\ndepth = 3\n", "colour = red\n", "depth\n", "grid = 1\n",
                                  "format = xml\n", "anchors = 0,0.01,0.01\n", "seed = -1\n"])
def test_config_rejects(text):
    with pytest.raises(UsageError):
        RunConfig.from_text(text)


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    cfg = out / "run.cfg"
    cfg.write_text(f"depth = 2\nsamples = 2000\ncompetitors = 6\nout = {out}\n")
    assert main(["construct", "--config", str(cfg)]) == EXIT_OK
    return out, cfg


def test_construct_artifacts(built):
    out, _ = built
    for name in ("schedule.json", "profiles.json", "config.txt", "certificates.csv"):
        assert (out / name).exists()
    rows = _csv(out / "certificates.csv")
    assert rows and all(r["passed"] == "True" for r in rows)
    assert "depth = 2" in (out / "config.txt").read_text()


def test_construct_is_deterministic(built, tmp_path):
    out, cfg = built
    assert main(["construct", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    for name in ("schedule.json", "profiles.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_eval_rows(built):
    out, cfg = built
    assert main(["eval", "--config", str(cfg), "--t=-T,0,0.01,T", "--theta", "1.5,20", "--anchor", "1"]) == EXIT_OK
    rows = _csv(out / "eval.csv")
    t_rows = [r for r in rows if r["kind"] == "t"]
    assert [r["w_prime_defined"] for r in t_rows] == ["True", "False", "True", "True"]
    assert float(t_rows[0]["w"]) == -float(t_rows[-1]["w"])
    assert float(t_rows[1]["w"]) == 0.0
    assert float(t_rows[2]["w"]) == pytest.approx(0.0041088324470317004751, rel=1e-15)
    th = [r for r in rows if r["kind"] == "theta"]
    assert len(th) == 4
    deep = [r for r in th if float(r["theta"]) == 20.0]
    assert all(r["region"] == "scaled" for r in deep)


def test_eval_needs_points(built):
    _, cfg = built
    assert main(["eval", "--config", str(cfg)]) == EXIT_USAGE
    assert main(["eval", "--config", str(cfg), "--t", "1.0"]) == EXIT_USAGE


def test_probe(built):
    out, cfg = built
    assert main(["probe", "--config", str(cfg), "0", "1", "--format", "json"]) == EXIT_OK
    d = json.loads((out / "probe.json").read_text())
    r0 = d["reports"][0]
    assert r0["quotient_plus"] == 1.0 and r0["quotient_minus"] == -1.0
    assert main(["probe", "--config", str(cfg), "5"]) == EXIT_USAGE


def test_minimize_is_seeded(built, tmp_path):
    out, cfg = built
    assert main(["minimize", "--config", str(cfg), "--grid", "65", "--starts", "3", "--seed", "4"]) == EXIT_OK
    first = (out / "solve.csv").read_text()
    assert main(["minimize", "--config", str(cfg), "--grid", "65", "--starts", "3", "--seed", "4"]) == EXIT_OK
    assert (out / "solve.csv").read_text() == first
    assert len(first.splitlines()) == 4


def test_precision_mismatch(built):
    _, cfg = built
    assert main(["probe", "--config", str(cfg), "--precision", "192", "0"]) == EXIT_USAGE


def test_missing_artifacts(tmp_path):
    assert main(["probe", "--out", str(tmp_path), "--depth", "0"]) == EXIT_USAGE


def test_verify(built):
    out, cfg = built
    assert main(["verify", "--config", str(cfg)]) == EXIT_OK
    rows = _csv(out / "verify.csv")
    checks = {r["check"].split(":")[0] for r in rows}
    assert {"cert", "roundtrip", "dini", "sigma", "lipschitz", "audit", "jump", "minimality"} <= checks
    assert all(r["passed"] == "True" for r in rows)


def test_verify_detects_tampering(built, tmp_path):
    out, cfg = built
    for name in ("schedule.json", "profiles.json"):
        (tmp_path / name).write_bytes((out / name).read_bytes())
    s = json.loads((tmp_path / "schedule.json").read_text())
    s["stages"][1]["T"], s["stages"][2]["T"] = s["stages"][2]["T"], s["stages"][1]["T"]
    (tmp_path / "schedule.json").write_text(json.dumps(s, indent=1) + "\n")
    code = main(["verify", "--config", str(cfg), "--out", str(tmp_path)])
    assert code in (EXIT_FAIL, EXIT_USAGE)


def test_entry_point_usage_exit():
    r = subprocess.run([sys.executable, "-m", "singmin.cli", "frobnicate"], capture_output=True, text=True)
    assert r.returncode == EXIT_USAGE
    assert "usage" in r.stderr.lower() or "error" in r.stderr.lower()
