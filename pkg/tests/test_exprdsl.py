import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distcurrents.exprdsl import (
    ArityError,
    ExprSyntaxError,
    UnknownIdentifierError,
    evaluate,
    parse,
    parse_vector,
    to_source,
)


def test_parse_examples():
    e = parse("x1/sqrt(x1^2+x2^2)", 2)
    assert evaluate(e, [3.0, 4.0]) == pytest.approx(0.6)
    with pytest.raises(ArityError):
        parse("x3", 2)
    with pytest.raises(ExprSyntaxError) as err:
        parse("sin(", 1)
    assert err.value.column == 5
    with pytest.raises(UnknownIdentifierError):
        parse("foo(x1)", 1)
    with pytest.raises(ArityError):
        parse("atan2(x1)", 1)
    with pytest.raises(ExprSyntaxError):
        parse("   ", 1)


def test_syntax_error_line_and_column():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x1 +\n  * x2", 2)
    assert (err.value.line, err.value.column) == (2, 3)


def test_evaluate_examples():
    assert evaluate(parse("x1+x2", 2), [1, 2]) == 3.0
    assert evaluate(parse("norm(x1,x2)", 2), [3, 4]) == 5.0
    b = parse("bump(0,0;0.5)", 2)
    assert evaluate(b, [0.0, 0.0]) == 1.0
    assert evaluate(b, [0.5, 0.0]) == 0.0
    assert evaluate(b, [0.3, 0.4]) == 0.0


def test_precedence_and_associativity():
    assert evaluate(parse("2^3^2", 0), []) == 2.0**9
    assert evaluate(parse("-x1^2", 1), [3.0]) == 9.0
    assert evaluate(parse("-(x1^2)", 1), [3.0]) == -9.0
    assert evaluate(parse("8/4/2", 0), []) == 1.0
    assert evaluate(parse("2-3-4", 0), []) == -5.0
    assert evaluate(parse("1+2*3", 0), []) == 7.0
    assert evaluate(parse("pi", 0), []) == math.pi


def test_nan_propagation():
    assert math.isnan(evaluate(parse("1/x1", 1), [0.0]))
    assert math.isnan(evaluate(parse("log(x1)", 1), [-1.0]))
    assert math.isnan(evaluate(parse("sqrt(x1)", 1), [-1.0]))


def test_functions():
    pt = [0.3, -0.7]
    assert evaluate(parse("atan2(x2,x1)", 2), pt) == pytest.approx(math.atan2(-0.7, 0.3))
    assert evaluate(parse("min(x1,x2,0)", 2), pt) == -0.7
    assert evaluate(parse("max(x1,x2)", 2), pt) == 0.3
    assert evaluate(parse("abs(x2)+exp(0)+cos(0)+sin(0)", 2), pt) == pytest.approx(2.7)


def test_y_variables_follow_x():
    e = parse("x1+10*y2", 2, 2)
    assert e.width == 4
    assert evaluate(e, [1.0, 0.0, 0.0, 2.0]) == 21.0
    with pytest.raises(ArityError):
        parse("y3", 2, 2)


def test_vectorized_evaluation():
    e = parse("x1*x2", 2)
    x = np.linspace(0, 1, 5)
    np.testing.assert_array_equal(e.evaluate_coords([x[:, None], x[None, :]]), np.outer(x, x))
    v = parse_vector(["x1", "x2", "x1+x2"], 2)
    assert v.codim == 3 and v([1.0, 2.0]).tolist() == [1.0, 2.0, 3.0]


def test_bump_is_c1_at_support_boundary():
    b = parse("bump(0.1,-0.2;0.5)", 2)
    h = 1e-6
    for r in (0.5 - 1e-3, 0.5, 0.5 + 1e-3):
        p = np.array([0.1 + r, -0.2])
        g = (evaluate(b, p + [h, 0]) - evaluate(b, p - [h, 0])) / (2 * h)
        assert abs(g) < 1e-6
    # interior gradient matches the analytic derivative
    p = np.array([0.3, -0.2])
    q = (0.2 / 0.5) ** 2
    exact = math.exp(1 - 1 / (1 - q)) * (-1 / (1 - q) ** 2) * (2 * 0.2 / 0.25)
    g = (evaluate(b, p + [h, 0]) - evaluate(b, p - [h, 0])) / (2 * h)
    assert g == pytest.approx(exact, rel=1e-6)


_atoms = st.sampled_from(["x1", "x2", "y1", "pi", "2", "0.5", "3.25e-3", "10"])


def _combine(children):
    bin_ops = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(lambda t: f"({t[0]}){t[1]}({t[2]})")
    neg = children.map(lambda c: f"-({c})")
    calls = st.tuples(st.sampled_from(["sin", "cos", "exp", "abs", "sqrt"]), children).map(lambda t: f"{t[0]}({t[1]})")
    multi = st.tuples(st.sampled_from(["min", "max", "norm", "atan2"]), children, children).map(lambda t: f"{t[0]}({t[1]},{t[2]})")
    bump = st.tuples(children, children).map(lambda t: f"bump({t[0]},{t[1]};0.7)")
    return st.one_of(bin_ops, neg, calls, multi, bump)


expressions = st.recursive(_atoms, _combine, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(expressions)
def test_round_trip(src):
    e = parse(src, 2, 1)
    printed = to_source(e.ast)
    again = parse(printed, 2, 1)
    assert again.ast == e.ast
    assert to_source(again.ast) == printed
    pt = [0.3, -0.4, 0.2]
    a, b = evaluate(e, pt), evaluate(again, pt)
    assert (math.isnan(a) and math.isnan(b)) or a == b
