import pytest
from mpmath import mp

from singmin.construction import build_construction
from singmin.functional import Problem
from singmin.serialize import save_construction


@pytest.fixture(autouse=True)
def _working_precision():
    """Tests parse literals at the library's default working precision."""
    prec = mp.prec
    mp.prec = 128
    yield
    mp.prec = prec


@pytest.fixture(scope="session")
def con6():
    """Default dyadic anchors, depth 6."""
    return build_construction()


@pytest.fixture(scope="session")
def problem(con6):
    return Problem(con6)


@pytest.fixture(scope="session")
def artifacts(con6, tmp_path_factory):
    d = tmp_path_factory.mktemp("artifacts")
    save_construction(con6, d / "schedule.json", d / "profiles.json")
    return d


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion."""

    def record(k: int, name: str, passed: bool, detail: str) -> None:
        ACCEPTANCE[k] = f"[{k}] {'PASS' if passed else 'FAIL'}  {name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
