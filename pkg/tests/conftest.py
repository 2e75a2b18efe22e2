import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ridefbp.dataset import install_collection  # noqa: E402
from ridefbp.ride import build_app  # noqa: E402
from ridefbp.sim import SimConfig, run  # noqa: E402


@pytest.fixture(scope="session")
def default_data_run():
    """Stage data, default config (seed 42, 2000 ticks): (graph, collector, runlog)."""
    graph = build_app("data")
    collector = install_collection(graph)
    runlog = run(SimConfig(), graph, collector)
    return graph, collector, runlog


SUITE_BUDGET_S = 60.0


def pytest_sessionstart(session):
    session._started = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    results = getattr(session.config, "_acceptance_results", None)
    if results is None:
        return
    elapsed = time.perf_counter() - session._started
    session.config._suite_elapsed = elapsed
    if elapsed >= SUITE_BUDGET_S:
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    elapsed = getattr(config, "_suite_elapsed", None)
    if elapsed is not None:
        verdict = "PASS" if elapsed < SUITE_BUDGET_S else "FAIL"
        terminalreporter.write_line(f"criterion 1 (suite time): {verdict}  full run took {elapsed:.1f}s, budget {SUITE_BUDGET_S:.0f}s")
