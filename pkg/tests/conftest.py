import numpy as np
import pytest

from cpdeconv.kernels import gamma_kernel, green_kernel
from cpdeconv.smoother import build_smoother
from cpdeconv.testbed import ClassSpec, make_hard_function, make_jump_function

THETA = 0.41


@pytest.fixture(scope="session")
def smoother():
    return build_smoother(1 / 64)


@pytest.fixture(scope="session")
def green1():
    return green_kernel([1.0])


@pytest.fixture(scope="session")
def gamma_half():
    return gamma_kernel(0.5)


@pytest.fixture(scope="session")
def template_f():
    """Pure Gaussian-template jump, a = 1."""
    return make_jump_function(THETA, 1.0, 0.5)


@pytest.fixture(scope="session")
def bump_f():
    return make_jump_function(THETA, 1.0, 0.5, [{"center": -1.0, "amp": 0.8, "width": 0.3}])


@pytest.fixture(scope="session")
def hard_f():
    a = 3e4
    return make_hard_function(THETA, a, 0.5, ClassSpec("Fm", a, 1.5 * a, m=1))


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion, then assert."""

    def report(number: int, ok: bool, detail: str):
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config._acceptance_lines.append(line)
        assert ok, line

    return report
