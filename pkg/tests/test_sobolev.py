import math

import numpy as np
import pytest

from distcurrents.errors import InvalidArgumentError
from distcurrents.fields import BoxGrid, SampledMap, mollify
from distcurrents.sobolev import (
    SobolevParams,
    continuity_ratio,
    gagliardo,
    gagliardo_seminorm,
    half_offsets,
    offset_row,
    offset_sum,
    wsp_norm,
)

from conftest import VORTEX, bump_test, sampled, square

HALF = SobolevParams(0.5, 2.0)
# x1 on (0,1)^2 at resolution 512, s = 1/2, p = 2, by the same midpoint rule
X1_REFERENCE_512 = 1.217704968960466


def x1_closed_sum(m, s=0.5, p=2.0):
    """The midpoint double sum for u = x1, summed in closed form over offsets."""
    h = 1.0 / m
    o = np.arange(-(m - 1), m)
    o1, o2 = np.meshgrid(o, o, indexing="ij")
    r = np.hypot(o1, o2) * h
    r[m - 1, m - 1] = np.inf
    terms = (np.abs(o1) * h) ** p * (m - np.abs(o1)) * (m - np.abs(o2)) / r ** (2 + s * p)
    return (math.fsum(terms.ravel()) * h**4) ** (1 / p)


def test_params():
    with pytest.raises(InvalidArgumentError):
        SobolevParams(1.0, 2.0)
    with pytest.raises(InvalidArgumentError):
        SobolevParams(0.5, 0.5)
    assert SobolevParams.trace(3).s == pytest.approx(2 / 3)


def test_constant_has_zero_seminorm():
    u = sampled(("3", "-2"), square(16))
    assert gagliardo_seminorm(u, HALF) == 0.0
    assert wsp_norm(sampled(("1.5",) * 1, square(16)), HALF) == pytest.approx(1.5 * 2)


def test_homogeneity(rng):
    u = SampledMap(square(12), rng.standard_normal((12, 12, 2)))
    cu = SampledMap(u.grid, -2.5 * u.values)
    assert gagliardo_seminorm(cu, SobolevParams(0.3, 3)) == pytest.approx(2.5 * gagliardo_seminorm(u, SobolevParams(0.3, 3)), rel=1e-13)


def test_x1_sum_matches_closed_form():
    for m in (16, 64):
        u = sampled(("x1", "0"), BoxGrid.cube(2, 0.0, 1.0, m))
        assert gagliardo_seminorm(u, HALF) == pytest.approx(x1_closed_sum(m), rel=1e-12)


def test_x1_regression_oracle():
    assert x1_closed_sum(512) == pytest.approx(X1_REFERENCE_512, rel=1e-14)
    u = sampled(("x1", "0"), BoxGrid.cube(2, 0.0, 1.0, 128))
    assert gagliardo_seminorm(u, HALF) == pytest.approx(X1_REFERENCE_512, rel=5e-3)


def test_offsets_are_symmetric_bitwise(rng):
    g = BoxGrid((0.0, 0.0), (1.0, 2.0), (7, 9))
    vals = rng.standard_normal(g.shape + (2,))
    valid = np.ones(g.shape, dtype=bool)
    valid[3, 4] = False
    for o in half_offsets(g.shape):
        neg = tuple(-c for c in o)
        assert offset_sum(vals, valid, o, 2.5) == offset_sum(vals, valid, neg, 2.5)


def test_batched_rows_match_single_offsets(rng):
    shape = (6, 5, 7)
    vals = rng.standard_normal(shape + (3,))
    valid = rng.random(shape) > 0.1
    for lead in [(0, 0), (2, -3), (-1, 4)]:
        row = offset_row(vals, valid, lead, 1.5)
        for c in range(-6, 7):
            assert row[c + 6] == pytest.approx(offset_sum(vals, valid, lead + (c,), 1.5), rel=1e-12, abs=1e-12)


def test_triangle_inequality(rng):
    g = square(12)
    P = SobolevParams(0.4, 2.0)
    for _ in range(5):
        a, b = rng.standard_normal((2, 12, 12, 2))
        u, v, w = SampledMap(g, a), SampledMap(g, b), SampledMap(g, a + b)
        assert wsp_norm(w, P) <= wsp_norm(u, P) + wsp_norm(v, P) + 1e-12


def test_vortex_norm_stable_under_refinement():
    a = wsp_norm(sampled(VORTEX, square(64)), HALF)
    b = wsp_norm(sampled(VORTEX, square(128)), HALF)
    assert math.isfinite(a) and abs(b - a) <= 0.02 * a


def test_budget_subsamples_and_flags():
    u = sampled(("sin(x1)", "x2"), square(64))
    full = gagliardo(u, HALF)
    sub = gagliardo(u, HALF, budget=1024)
    assert not full.subsampled and sub.subsampled and sub.stride == 2 and sub.nodes == 1024
    assert sub.value == pytest.approx(full.value, rel=0.1)


def test_mollification_decreases_seminorm():
    u = sampled(VORTEX, square(48))
    base = gagliardo_seminorm(u, HALF)
    for eps in (0.1, 0.2, 0.4):
        assert gagliardo_seminorm(mollify(u, eps), HALF) < base


def test_masked_nodes_skipped():
    g = square(5)
    u = sampled(VORTEX, g)
    assert u.masked_count == 1 and math.isfinite(gagliardo_seminorm(u, HALF))


def test_continuity_ratio_basic():
    g = square(32)
    psi = bump_test(g)
    u = sampled(("sin(x1)*cos(x2)", "x1*x2"), g)
    v = sampled(("cos(x1+x2)", "x1-x2^2"), g)
    assert continuity_ratio(u, u, (1, 2), (1, 2), psi, 2) == 0.0
    r = continuity_ratio(u, v, (1, 2), (1, 2), psi, 2)
    assert math.isfinite(r) and r > 0
    assert continuity_ratio(v, u, (1, 2), (1, 2), psi, 2) == r
    with pytest.raises(InvalidArgumentError):
        continuity_ratio(u, v, (1, 2), (1, 2), psi, 1)


def test_continuity_ratio_vortex_mollified():
    g = square(64)
    psi = bump_test(g)
    u = sampled(VORTEX, g)
    ratios = [continuity_ratio(u, mollify(u, eps), (1, 2), (1, 2), psi, 2) for eps in (0.4, 0.2, 0.1)]
    assert all(math.isfinite(r) for r in ratios)
    # bounded as eps -> 0: no growth beyond the refinement allowance
    assert all(b <= 1.25 * a for a, b in zip(ratios, ratios[1:]))
