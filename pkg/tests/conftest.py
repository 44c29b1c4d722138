from __future__ import annotations

import numpy as np
import pytest

from lifespan_lab.coefficients import CoefficientModel, make_constant, make_power_law

# the four power-law models used throughout the acceptance suite
FOUR_MODELS = {
    "a1_b0": (0.0, 0.0, 2.0),
    "tricomi_half_damped": (0.5, 1.0, 2.0),
    "tricomi_one": (1.0, 0.0, 2.0),
    "decaying_speed_damped": (-0.5, 1.0, 2.0),
}


@pytest.fixture(scope="session")
def const_model():
    return make_constant()


@pytest.fixture(scope="session")
def damped_half():
    return make_power_law(0.5, 1.0, 2.0)


def harmonic_damping_model() -> CoefficientModel:
    """a = 1, b = 1/(1+t): damping just outside L^1."""
    def arr(t):
        return np.asarray(t, dtype=float)

    return CoefficientModel(
        a=lambda t: np.ones_like(arr(t)),
        a1=lambda t: np.zeros_like(arr(t)),
        a2=lambda t: np.zeros_like(arr(t)),
        b=lambda t: (1.0 + arr(t)) ** -1.0,
        b1=lambda t: -(1.0 + arr(t)) ** -2.0,
        family="custom",
        params={},
        B_closed=lambda t: np.log1p(arr(t)),
    )


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def report(num: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {num} [{title}]: {'PASS' if ok else 'FAIL'} | {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
