import numpy as np
import pytest

from layscat import ScatteringConfig, make_sphere, make_star_surface, partition_boundary

SQRT4PI = np.sqrt(4 * np.pi)


def sphere_config(n=16, k0=2.0, k1=3.0, lambda0=0.5, rule="all-dirichlet", impedance=0.0,
                  R0=1.0, R1=0.4, star=None):
    if star is None:
        s0 = make_sphere((0, 0, 0), R0, n, 2 * n)
    else:
        s0 = make_star_surface(star, n, 2 * n)
    s1 = partition_boundary(make_sphere((0, 0, 0), R1, n, 2 * n), rule)
    return ScatteringConfig(k0, k1, lambda0, s0, s1, impedance=impedance)


@pytest.fixture(scope="session")
def soft16():
    return sphere_config(16)


@pytest.fixture(scope="session")
def imp16():
    return sphere_config(16, rule="all-impedance", impedance=1.0)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
