import math

import pytest

from lineshape_memory import ControlParams, Lineshape, MemoryParams

# reference memory point and its optimal control (theta, delay, duration)
M_T = MemoryParams(5.0, 1.0)
G_T = ControlParams(2.75 * math.pi, -0.25, 1.25)


@pytest.fixture
def rect():
    return Lineshape.rectangular()


@pytest.fixture(params=["rectangular", "gaussian", "lorentzian"])
def named(request):
    return Lineshape.named(request.param)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
