import time

import pytest

from stokes_afem.adaptivity import RunConfig, run_campaign

ACCEPTANCE = {}
DOF_CAP = 350_000


def record(number, title, ok, detail):
    """Store one acceptance outcome; printed in the terminal summary."""
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


def _timed(config):
    t0 = time.perf_counter()
    table = run_campaign(config)
    table.wall = time.perf_counter() - t0
    return table


@pytest.fixture(scope="session")
def tshape_adaptive_full():
    return _timed(RunConfig(domain="tshape", scheme="full", estimator="eta", max_iterations=60, dof_cap=DOF_CAP))


@pytest.fixture(scope="session")
def tshape_adaptive_reduced():
    return _timed(
        RunConfig(domain="tshape", scheme="reduced", estimator="theta", max_iterations=60, dof_cap=DOF_CAP)
    )


@pytest.fixture(scope="session")
def tshape_uniform_full():
    return _timed(
        RunConfig(domain="tshape", scheme="full", estimator="eta", refinement="uniform", max_iterations=60, dof_cap=DOF_CAP)
    )


@pytest.fixture(scope="session")
def lshape_adaptive_full():
    return _timed(RunConfig(domain="lshape", scheme="full", estimator="eta", max_iterations=60, dof_cap=DOF_CAP))
