import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from mvsets import CoefficientField, GridSpec, build_operator, greens_function  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

OPERATORS = {
    "identity": CoefficientField.identity(),
    "diagonal": CoefficientField.diagonal(1.0, 4.0),
    "rotated": CoefficientField.rotated_anisotropic(np.pi / 4, 4.0),
    "checkerboard": CoefficientField.checkerboard(1.0, 4.0, 0.25),
}


@pytest.fixture(scope="session")
def lap129():
    op = build_operator(CoefficientField.identity(), GridSpec(129))
    return op, greens_function(op)


@pytest.fixture(scope="session")
def small_ops():
    return {k: build_operator(f, GridSpec(33)) for k, f in OPERATORS.items()}


@pytest.fixture(scope="session")
def acceptance(request):
    """Collects one ``(number, line)`` per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, passed, detail):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'} {title}: {detail}"
        lines.append((number, line))
        print(line)
        return passed
    return record


_ACCEPTANCE = pytest.StashKey()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
