"""Shared fixtures: parsed battery configs and cached solves.

The expensive pieces (continuation solves at 128/256/512 cells and the
full battery of packaged experiments) are computed once per session and
shared across test modules so the whole suite stays fast.
"""
from __future__ import annotations

import numpy as np
import pytest

from condjump.cli import RunContext, _packaged_configs, _solve_case, run_experiment
from condjump.config import Lcg, load_config

CRITERION_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line("  " + line)


@pytest.fixture(scope="session")
def packaged():
    """File name -> parsed ExperimentConfig for every packaged experiment."""
    return {fname: load_config(text) for fname, text in _packaged_configs()}


@pytest.fixture(scope="session")
def solve_cache(packaged):
    """

    Accessor (config file name, cells) -> fresh RunContext around a cached
    solve.  The context is rebuilt per call so stateful pieces (the audit
    rng) never leak between tests.
    """
    cache: dict = {}

    def get(name: str, cells: int | None = None) -> RunContext:
        key = (name, cells)
        if key not in cache:
            grid, problem, field, info = _solve_case(packaged[name], cells)
            cache[key] = (grid, problem, field)
        grid, problem, field = cache[key]
        cfg = packaged[name]
        return RunContext(cfg=cfg, grid=grid, problem=problem, field=field, rng=Lcg(cfg.seed))

    return get


@pytest.fixture(scope="session")
def battery_reports(packaged):
    """Full audit reports for every packaged experiment at its shipped grid."""
    return {fname: run_experiment(cfg, emit=False) for fname, cfg in packaged.items()}


@pytest.fixture()
def criterion():
    """Record one acceptance verdict line and assert it passed."""

    def record(label: str, ok: bool, detail: str = ""):
        line = "%s: %s" % (label, "PASS" if ok else "FAIL")
        if detail:
            line += "  (%s)" % detail
        print(line)
        CRITERION_LINES.append(line)
        assert ok, line

    return record
