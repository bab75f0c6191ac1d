import pytest

from distcurrents import exprdsl, fields

VORTEX = ("x1/sqrt(x1^2+x2^2)", "x2/sqrt(x1^2+x2^2)")
SMOOTH = ("sin(x1)*cos(x2)", "x1*x2")


def square(res, lo=-1.0, hi=1.0):
    return fields.BoxGrid.cube(2, lo, hi, res)


def sampled(sources, grid):
    return fields.sample(exprdsl.parse_vector(sources, grid.dim), grid)


def bump_test(grid, src="bump(0,0;0.5)"):
    return fields.test_function(exprdsl.parse(src, grid.dim), grid)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
