import time

import pytest

from bdeg.beltrami import truncate
from bdeg.example import ExampleParams, example_coefficient, example_majorant
from bdeg.field_core import build_grid
from bdeg.scheme import SweepConfig, analytic_sweep, run_sweep
from bdeg.solver import disk_normalized_solution

# criterion number -> list of (label, passed, detail), filled by test_acceptance
CRITERIA: dict[int, list] = {}
_START = {}


def pytest_sessionstart(session):
    _START["t"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    elapsed = time.perf_counter() - _START.get("t", time.perf_counter())
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        parts = CRITERIA[n]
        if n == 13:
            parts = parts + [("suite runtime", elapsed < 300, f"{elapsed:.1f} s (limit 300 s)")]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}")
        for label, p, detail in parts:
            tr.write_line(f"    [{'pass' if p else 'fail'}] {label}: {detail}")


@pytest.fixture(scope="session")
def grid512():
    return build_grid(2.0, 512)


@pytest.fixture(scope="session")
def grid256():
    return build_grid(2.0, 256)


@pytest.fixture(scope="session")
def alpha1():
    return ExampleParams(1.0)


@pytest.fixture(scope="session")
def solved_k4(grid512, alpha1):
    """Numerical solution for mu_4 of the example, with its inverse and the solve time."""
    mu4 = truncate(example_coefficient(alpha1), 4)
    t0 = time.perf_counter()
    qmap = disk_normalized_solution(mu4, grid512)
    elapsed = time.perf_counter() - t0
    return qmap.with_inverse(), elapsed


@pytest.fixture(scope="session")
def analytic_sweep_a1(grid512, alpha1):
    return analytic_sweep(alpha1, [4, 8, 16, 32], grid512)


@pytest.fixture(scope="session")
def numerical_sweep_a1(grid512, alpha1):
    cfg = SweepConfig(example_coefficient(alpha1), [4, 8, 16, 32], grid512,
                      majorant=example_majorant(alpha1), slack=1e-2)
    return run_sweep(cfg)
