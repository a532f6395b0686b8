import numpy as np
import pytest

from almlab import (
    AffineInequality,
    AffineMap,
    ConvexProgram,
    GeneratorSpec,
    QuadraticObjective,
    generate,
)

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, printed unconditionally."""
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {num:2d} {name}: {detail}")


@pytest.fixture(scope="session")
def reference1d():
    """min 0.5*x^2 s.t. x - 1 = 0; solution (x*, lam*) = (1, -1)."""
    return generate(GeneratorSpec("reference1d"))


@pytest.fixture(scope="session")
def sc_qp7():
    return generate(GeneratorSpec("sc_qp", seed=7))


def make_unconstrained_1d():
    """min 0.5*x^2, no constraints."""
    return ConvexProgram(smooth=QuadraticObjective(np.array([[1.0]]), np.zeros(1)))


def make_halfspace_qp():
    """min 0.5*||x||^2 over x in R^2 s.t. x_1 <= -1; x* = (-1, 0), mu* = 1."""
    return ConvexProgram(
        smooth=QuadraticObjective(np.eye(2), np.zeros(2)),
        ineqs=(AffineInequality(np.array([1.0, 0.0]), -1.0),),
    )


def make_zero_objective_eq():
    """min 0 s.t. x = 0 in R^1; X* = {0}, P* = {0}."""
    return ConvexProgram(
        smooth=QuadraticObjective(np.array([[0.0]]), np.zeros(1)),
        eq=AffineMap(np.array([[1.0]]), np.zeros(1)),
    )
