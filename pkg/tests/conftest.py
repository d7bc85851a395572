"""Shared fixtures and the acceptance-summary reporting plumbing."""

from fractions import Fraction

import pytest

from blochdirac import constant_potential, piecewise_potential, zero_potential

HALF = Fraction(1, 2)


@pytest.fixture(scope="session")
def zero_spec():
    return zero_potential()


@pytest.fixture(scope="session")
def const_spec():
    """Constant p = 0.3, q = 0.4i; everything closes in elementary functions."""
    return constant_potential(0.3, 0.4j)


@pytest.fixture(scope="session")
def step_spec():
    """Two-step potential, complex on the second step, constant q.

    Generic enough that every periodic and antiperiodic eigenvalue pair
    splits into simple roots, so the centers are non-degenerate.
    """
    return piecewise_potential([(0, HALF, 0.5, 0.1), (HALF, 1, -0.5 + 0.2j, 0.1)])


@pytest.fixture(scope="session")
def mild_step_spec():
    """The step potential scaled by 0.1."""
    return piecewise_potential([(0, HALF, 0.05, 0.01),
                                (HALF, 1, -0.05 + 0.02j, 0.01)])


# Two-step potential tuned (through the imaginary part of the second p step)
# until a pair of branches collides at an interior real quasimomentum in a
# genuine square-root node. The collision location was found by bisection on
# the branch-pair discriminant and is frozen here; the tests re-verify it
# from scratch rather than trusting these digits.
TUNED_S = 0.004135911131884314
TUNED_T0 = 0.655523440864842
TUNED_LAMBDA0 = 1.3261564586160017 - 0.49140068403983955j


@pytest.fixture(scope="session")
def tuned_collision():
    spec = piecewise_potential([
        (0, HALF, 0.99 - 0.31j, 0.18 - 0.74j),
        (HALF, 1, 0.99 + (-0.89 + TUNED_S) * 1j, 0.13 + 0.07j),
    ])
    return spec, TUNED_T0, TUNED_LAMBDA0


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion, printed at the end

_acceptance_lines: list[str] = []


@pytest.fixture
def acceptance_report():
    """record(name, ok, detail): logs one summary line, then asserts ok."""

    def record(name: str, ok: bool, detail: str):
        _acceptance_lines.append(
            f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, f"{name}: {detail}"

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    name = getattr(item.function, "_ac_name", None)
    if name and rep.when == "call":
        # guarantee a line even when the test dies before recording one
        if not any(line.startswith(name + " ") for line in _acceptance_lines):
            status = "PASS" if rep.passed else "FAIL"
            _acceptance_lines.append(f"{name} {status}: (no detail recorded)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines,
                           key=lambda s: int(s.split(" ", 1)[0].split("-")[1])):
            terminalreporter.write_line(line)
