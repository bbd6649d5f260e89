"""Expression parser / evaluator / dual-number tests."""

import math

import numpy as np
import pytest

from isocycle.errors import ModelError
from isocycle.exprs import (
    Dual,
    dual_env,
    eval_expr,
    expr_has_div,
    expr_variables,
    parse_expr,
    subst,
    to_source,
)


def ev(text, **env):
    return eval_expr(parse_expr(text), env)


def test_precedence_and_associativity():
    assert ev("2 + 3*4") == 14.0
    assert ev("2*3 + 4") == 10.0
    assert ev("2 - 3 - 4") == -5.0
    assert ev("12 / 3 / 2") == 2.0
    assert ev("-2^2") == -4.0  # unary minus binds looser than the power
    assert ev("2*x^3", x=2.0) == 16.0
    assert ev("(2*x)^3", x=2.0) == 64.0


def test_power_tokens():
    assert ev("x**2", x=3.0) == 9.0
    assert ev("x^2", x=3.0) == 9.0
    assert ev("x^0", x=123.0) == 1.0
    # exponent must be a literal nonnegative integer
    with pytest.raises(ModelError):
        parse_expr("x^(2)")
    with pytest.raises(ModelError):
        parse_expr("x^-1")


def test_numbers_and_pi():
    assert ev("1.5e2") == 150.0
    assert ev(".5") == 0.5
    assert ev("2e-3") == 0.002
    assert ev("pi") == math.pi
    # 'e' not followed by digits is not an exponent
    with pytest.raises(ModelError):
        parse_expr("2e + 1")  # 'e' alone would have to be a separate token


def test_functions():
    assert ev("sin(0)") == 0.0
    assert ev("cos(0)") == 1.0
    assert abs(ev("exp(1)") - math.e) < 1e-15
    assert ev("sqrt(4)") == 2.0
    with pytest.raises(ModelError):
        parse_expr("tanh(x)")


def test_parse_errors_carry_offsets():
    for bad in ["", "2 +", "(1", "1)", "x^", "2..3 + foo bar"]:
        with pytest.raises(ModelError):
            parse_expr(bad)
    with pytest.raises(ModelError):
        parse_expr(3.0)


def test_unknown_variable():
    with pytest.raises(ModelError):
        ev("x + y", x=1.0)


def test_vectorized_evaluation():
    rng = np.random.default_rng(7)
    x = rng.normal(size=11)
    got = ev("x*(1 - x^2) + sin(x)", x=x)
    np.testing.assert_allclose(got, x * (1 - x**2) + np.sin(x), rtol=1e-15)


def test_variables_and_div_flags():
    e = parse_expr("x1*(1 - x1^2 - x2^2) + y1/(1 + y2)")
    assert expr_variables(e) == {"x1", "x2", "y1", "y2"}
    assert expr_has_div(e)
    assert not expr_has_div(parse_expr("x*y - sin(x)"))


def test_subst_roundtrip():
    e = parse_expr("0.1*(1 + x1^2)")
    pulled = subst(e, {"x1": parse_expr("cos(2*pi*th)/sqrt(1 + s)")})
    assert expr_variables(pulled) == {"th", "s"}
    th, s = 0.3, 0.2
    want = 0.1 * (1 + (math.cos(2 * math.pi * th) / math.sqrt(1 + s)) ** 2)
    assert abs(eval_expr(pulled, {"th": th, "s": s}) - want) < 1e-15


def test_to_source_reparses():
    texts = [
        "x1*(1 - x1^2 - x2^2) - 2*pi*x2 + y1",
        "0.1*(1 + x1^2)",
        "cos(2*pi*th)/sqrt(1 + s)",
        "-x + 2e-3",
    ]
    env = {"x1": 0.3, "x2": -0.4, "y1": 0.05, "th": 0.7, "s": 0.1, "x": 1.2}
    for t in texts:
        e = parse_expr(t)
        back = parse_expr(to_source(e))
        assert eval_expr(back, env) == eval_expr(e, env)


# ---------------------------------------------------------------------------
# duals


def test_dual_arithmetic_chain_rule():
    # f(x) = x*sin(x) + exp(x)/sqrt(x);  check against finite differences
    def f(v):
        return v * v.sin() + v.exp() / v.sqrt() if isinstance(v, Dual) else (
            v * math.sin(v) + math.exp(v) / math.sqrt(v)
        )

    x = 1.3
    d = f(Dual(x, (1.0,)))
    hstep = 1e-6
    fd = (f(x + hstep) - f(x - hstep)) / (2 * hstep)
    assert abs(d.val - f(x)) < 1e-15
    assert abs(d.grad[0] - fd) < 1e-9


def test_dual_through_evaluator():
    e = parse_expr("x1*(1 - x1^2 - x2^2) - 2*pi*x2")
    env = dual_env({"x1": 0.4, "x2": -0.2}, ("x1", "x2"))
    out = eval_expr(e, env)
    # analytic partials
    x1, x2 = 0.4, -0.2
    d1 = 1 - 3 * x1**2 - x2**2
    d2 = -2 * x1 * x2 - 2 * math.pi
    assert abs(out.grad[0] - d1) < 1e-14
    assert abs(out.grad[1] - d2) < 1e-14


def test_dual_array_coefficients():
    rng = np.random.default_rng(3)
    x = rng.normal(size=8)
    d = Dual(x, (np.ones_like(x), np.zeros_like(x)))
    out = eval_expr(parse_expr("x^3 - 2*x"), {"x": d})
    np.testing.assert_allclose(out.val, x**3 - 2 * x, rtol=1e-15)
    np.testing.assert_allclose(out.grad[0], 3 * x**2 - 2, rtol=1e-14)
    np.testing.assert_allclose(out.grad[1], 0.0, atol=0)


def test_dual_reflected_ops_beat_numpy_broadcast():
    # ndarray + Dual must come back as a Dual, not an object array
    x = np.linspace(0.0, 1.0, 5)
    d = Dual(np.zeros(5), (np.ones(5),))
    out = x + d
    assert isinstance(out, Dual)
    np.testing.assert_allclose(out.val, x)
    out2 = x * d
    assert isinstance(out2, Dual)
    np.testing.assert_allclose(out2.grad[0], x)


def test_dual_division_quotient_rule():
    x, y = 0.7, -1.9
    dx = Dual(x, (1.0, 0.0))
    dy = Dual(y, (0.0, 1.0))
    q = dx / dy
    assert abs(q.val - x / y) < 1e-16
    assert abs(q.grad[0] - 1.0 / y) < 1e-15
    assert abs(q.grad[1] - (-x / y**2)) < 1e-15
    r = 2.0 / dy
    assert abs(r.grad[1] - (-2.0 / y**2)) < 1e-15
