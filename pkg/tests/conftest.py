import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import DATA  # noqa: E402
from logiparticle.domain import load_domain  # noqa: E402

_acceptance: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        # parametrized criteria pass only if every case passes
        previous = _acceptance.get(number, (title, "passed"))[1]
        _acceptance[number] = (title, rep.outcome if previous == "passed" else previous)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, outcome = _acceptance[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {title}")


@pytest.fixture(scope="session")
def briefcase():
    return load_domain(DATA / "briefcase.pram")


@pytest.fixture(scope="session")
def depots():
    return load_domain(DATA / "depots.pram")


@pytest.fixture(scope="session")
def data_dir():
    return DATA
