"""Shared fixtures: tracked initial curves and per-level geometry of the examples."""

from functools import lru_cache

import numpy as np
import pytest

from sbdfcut.fem import DofMap
from sbdfcut.geometry import build_geometry
from sbdfcut.grid import GridSpec, classify
from sbdfcut.harness import run_example
from sbdfcut.problems import example
from sbdfcut.tracking import initial_curve


@lru_cache(maxsize=None)
def level(idx: int, inv_h: int, k: int):
    """``(problem, grid, curve, cls, geo, dofmap)`` of example ``idx`` at ``t = 0``."""
    problem = example(idx)
    h = 1.0 / inv_h
    grid = GridSpec.box(*problem.box, h)
    curve = initial_curve(problem.shape, 0.5 * h)
    cls = classify(grid, curve)
    geo = build_geometry(curve, cls, k)
    return problem, grid, curve, cls, geo, DofMap(cls, k)


@lru_cache(maxsize=None)
def converged_run(idx: int, k: int, inv_h: int):
    """Full run of example ``idx`` at ``h = 1/inv_h``, shared by every test of a session."""
    return run_example(idx, k, 1.0 / inv_h)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    """Log one acceptance line; it is echoed in the terminal summary."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
