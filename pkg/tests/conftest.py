import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, dim, rank=None):
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


# --- acceptance summary: one line per criterion --------------------------------------

ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    # count the call phase, and fixture (setup) failures
    if rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    num, title = mark.args
    ok, notes = ACCEPTANCE.get(num, (True, []))
    notes = notes + [v for k, v in item.user_properties if k == "detail"]
    if not rep.passed:
        notes.append(f"{item.name} failed")
    ACCEPTANCE[num] = (ok and rep.passed, notes)
    item.config._acceptance_titles = {**getattr(item.config, "_acceptance_titles", {}), num: title}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    titles = getattr(config, "_acceptance_titles", {})
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, notes = ACCEPTANCE[num]
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {titles.get(num, '')}"
        terminalreporter.write_line(line)
        for note in notes:
            terminalreporter.write_line(f"    {note}")
