import numpy as np
import pytest

from entropy_closure.quadrature import MomentBasis, build_gauss_legendre, build_projected_sphere


@pytest.fixture(scope="session")
def gl28():
    return build_gauss_legendre(28)


@pytest.fixture(scope="session")
def m1(gl28):
    return MomentBasis(1, gl28)


@pytest.fixture(scope="session")
def m2(gl28):
    return MomentBasis(2, gl28)


@pytest.fixture(scope="session")
def m2d():
    return MomentBasis(1, build_projected_sphere(10, 20))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
