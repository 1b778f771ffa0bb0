"""Suite-wide fixtures plus the acceptance summary table.

Tests marked ``@pytest.mark.criterion(n, "title")`` roll up into one
PASS/FAIL line per criterion after the run, so the acceptance surface is
readable without grepping the dotted output.
"""

from __future__ import annotations

import numpy as np
import pytest

from fedtraj import CorpusParams, generate_corpus


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, title): marks a test as covering an acceptance criterion"
    )
    config._criterion_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    out = yield
    rep = out.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    store = item.config._criterion_results
    entry = store.setdefault(num, {"title": title, "ok": True})
    # setup/teardown failures count against the criterion too
    if rep.failed or (rep.skipped and rep.when == "call"):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criterion_results", {})
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(results):
        entry = results[num]
        verdict = "PASS" if entry["ok"] else "FAIL"
        tr.write_line(f"criterion {num:>2}  {entry['title']:<58} {verdict}")


@pytest.fixture(scope="session")
def corpus_200():
    return generate_corpus(CorpusParams(n_trajectories=200), np.random.default_rng(20032))


@pytest.fixture
def rng():
    return np.random.default_rng(1729)
