import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from distcurrents.distminor import (
    cofactor_divergence_residual,
    div_minor,
    extension_terms,
    layer_chunks,
    pointwise_minor_integral,
)
from distcurrents.errors import DegenerateInputError, InvalidArgumentError
from distcurrents.extension import PRODUCT, ExtensionProfile
from distcurrents.fields import BoxGrid, SampledMap, TestFunction, integrate

from conftest import SMOOTH, VORTEX, bump_test, sampled, square


def test_layer_chunks():
    assert layer_chunks(40, 16) == [(0, 16), (16, 32), (32, 40)]


def test_extension_terms_signs():
    # alpha = (1,2) in n = 2: i runs over (1,2,3)
    terms = extension_terms((1, 2), 2)
    assert [(i, s, rest) for i, s, rest in terms] == [(1, 1, (2, 3)), (2, -1, (1, 3)), (3, 1, (1, 2))]


def test_vortex_coarse():
    g = square(64)
    ev = div_minor(sampled(VORTEX, g), (1, 2), (1, 2), bump_test(g))
    assert ev.value == pytest.approx(math.pi, rel=0.02)
    assert math.fsum(ev.breakdown.values()) == pytest.approx(ev.value, rel=1e-14)
    assert ev.masked == 0 and ev.extension == "averaging"


def test_affine_full_minor():
    g = square(64)
    u = sampled(("2*x1+0.5*x2", "x2"), g)
    psi = bump_test(g, "bump(0.1,0;0.5)")
    exact = 2.0 * integrate(psi.values, g).value
    assert div_minor(u, (1, 2), (1, 2), psi, ExtensionProfile(PRODUCT)).value == pytest.approx(exact, rel=1e-12)
    # the averaging extension adds an O(h^2) quadrature error
    assert div_minor(u, (1, 2), (1, 2), psi).value == pytest.approx(exact, rel=1e-4)


def test_k_zero_returns_integral():
    g = square(16)
    psi = bump_test(g)
    assert div_minor(sampled(VORTEX, g), (), (), psi).value == integrate(psi.values, g).value


def test_smooth_consistency_refines():
    errs = []
    for m in (32, 64, 128):
        g = square(m)
        u, psi = sampled(SMOOTH, g), bump_test(g, "bump(0.1,0.2;0.6)")
        errs.append(abs(div_minor(u, (1, 2), (1, 2), psi).value - pointwise_minor_integral(u, (1, 2), (1, 2), psi)))
    assert errs[0] > errs[1] > errs[2]


def test_linear_in_psi():
    g = square(32)
    u = sampled(VORTEX, g)
    a, b = bump_test(g, "bump(0,0;0.5)"), bump_test(g, "bump(0.2,-0.1;0.3)")
    combo = a.scaled(2.0) + b.scaled(-0.5)
    lhs = div_minor(u, (1, 2), (1, 2), combo).value
    rhs = 2.0 * div_minor(u, (1, 2), (1, 2), a).value - 0.5 * div_minor(u, (1, 2), (1, 2), b).value
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_row_swap_flips_sign():
    g = square(32)
    u = sampled(SMOOTH, g)
    swapped = SampledMap(g, u.values[..., ::-1])
    psi = bump_test(g, "bump(0.1,0.2;0.6)")
    assert div_minor(swapped, (1, 2), (1, 2), psi).value == pytest.approx(-div_minor(u, (1, 2), (1, 2), psi).value, rel=1e-13)
    # k = 1: the (1),(1) minor of the swapped map is the (1),(2) minor of u
    assert div_minor(swapped, (1,), (1,), psi).value == pytest.approx(div_minor(u, (1,), (2,), psi).value, rel=1e-13)


def test_product_extension_equals_pointwise():
    g = square(32)
    u, psi = sampled(SMOOTH, g), bump_test(g, "bump(0.1,0.2;0.6)")
    prod = div_minor(u, (1, 2), (1, 2), psi, ExtensionProfile(PRODUCT)).value
    assert prod == pytest.approx(pointwise_minor_integral(u, (1, 2), (1, 2), psi), rel=1e-10, abs=1e-15)


def test_threads_do_not_change_the_value():
    g = square(48)
    u, psi = sampled(VORTEX, g), bump_test(g)
    serial = div_minor(u, (1, 2), (1, 2), psi).value
    with ThreadPoolExecutor(3) as ex:
        assert div_minor(u, (1, 2), (1, 2), psi, map_fn=ex.map).value == serial


def test_errors():
    g = square(16)
    u, psi = sampled(VORTEX, g), bump_test(g)
    with pytest.raises(InvalidArgumentError):
        div_minor(u, (1, 2), (1,), psi)
    with pytest.raises(InvalidArgumentError):
        div_minor(u, (1, 3), (1, 2), psi)
    with pytest.raises(InvalidArgumentError):
        div_minor(u, (1,), (1,), bump_test(square(8)))
    dead = SampledMap(g, np.full(g.shape + (2,), np.nan))
    with pytest.raises(DegenerateInputError):
        div_minor(dead, (1, 2), (1, 2), psi)
    zero = TestFunction(g, np.zeros(g.shape), np.zeros(g.shape + (2,)))
    with pytest.raises(DegenerateInputError):
        div_minor(u, (1, 2), (1, 2), zero)


def test_pointwise_examples():
    g = square(16)
    psi = bump_test(g)
    assert pointwise_minor_integral(sampled(("x1", "x2"), g), (1, 2), (1, 2), psi) == pytest.approx(integrate(psi.values, g).value, rel=1e-13)
    assert pointwise_minor_integral(sampled(("1", "2"), g), (1,), (2,), psi) == 0.0
    with pytest.raises(DegenerateInputError):
        pointwise_minor_integral(sampled(VORTEX, square(5)), (1, 2), (1, 2), bump_test(square(5)))


def test_cofactor_residual_affine_and_quadratic():
    g = BoxGrid.cube(3, 0.0, 1.0, 8)
    U = sampled(("2*x1+x2-x3", "x1+3*x3", "x2-x1"), g)
    assert cofactor_divergence_residual(U, (1, 2, 3), (1, 2, 3), 1) < 1e-12
    # tensor-product central differences commute, so degree-2 maps are also exact
    Q = sampled(("x1^2+x2*x3", "x2^2-x1*x3", "x3^2+x1*x2"), g)
    assert cofactor_divergence_residual(Q, (1, 2, 3), (1, 2, 3), 2) < 1e-12


def test_cofactor_residual_second_order_on_cubic():
    res = []
    for m in (8, 16, 32):
        U = sampled(("x1^3+x2*x3^2", "x2^3-x1^2*x3", "x3^3+x1*x2^2"), BoxGrid.cube(3, 0.0, 1.0, m))
        res.append(cofactor_divergence_residual(U, (1, 2, 3), (1, 2, 3), 1))
    order = math.log2(res[1] / res[2])
    assert abs(order - 2.0) <= 0.25


def test_cofactor_residual_errors():
    g = square(5)
    with pytest.raises(DegenerateInputError):
        cofactor_divergence_residual(sampled(VORTEX, g), (1, 2), (1, 2), 1)
    with pytest.raises(InvalidArgumentError):
        cofactor_divergence_residual(sampled(SMOOTH, square(6)), (1,), (1,), 2)
