"""Forward-mode dual scalars: every operation checked against finite differences."""

import numpy as np
import pytest

from fxstyle import dual
from fxstyle.dual import Dual


def fd(f, x, h=1e-7):
    return (f(x + h) - f(x - h)) / (2 * h)


def seeded(x):
    return Dual.seed(x, 0, 1)


@pytest.mark.parametrize("x", [0.3, 1.7, -2.2])
def test_arithmetic_against_fd(x):
    cases = [
        (lambda t: t * t * t + 2.0 * t, lambda t: t * t * t + 2.0 * t),
        (lambda t: (t + 1.5) * (t - 0.5), lambda t: (t + 1.5) * (t - 0.5)),
        (lambda t: 1.0 / (t * t + 1.0), lambda t: 1.0 / (t * t + 1.0)),
        (lambda t: (t - 3.0) / (t * t + 2.0), lambda t: (t - 3.0) / (t * t + 2.0)),
        (lambda t: -t * 4.0 + 2.0 - t, lambda t: -t * 4.0 + 2.0 - t),
        (lambda t: 5.0 - t, lambda t: 5.0 - t),
        (lambda t: 2.0 / t if abs(x) > 1 else t / 2.0,
         lambda t: 2.0 / t if abs(x) > 1 else t / 2.0),
    ]
    for f_dual, f_float in cases:
        d = f_dual(seeded(x))
        assert d.val == pytest.approx(f_float(x), rel=1e-12)
        assert d.tan[0] == pytest.approx(fd(f_float, x), rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("fn_name,x", [
    ("exp", 0.4), ("exp", -1.3),
    ("log", 0.7), ("log", 4.2),
    ("sqrt", 0.25), ("sqrt", 9.0),
    ("sin", 0.9), ("cos", 0.9), ("sin", -2.0), ("cos", -2.0),
])
def test_elementary_functions_against_fd(fn_name, x):
    f = getattr(dual, fn_name)
    np_f = getattr(np, fn_name)
    d = f(seeded(x))
    assert d.val == pytest.approx(np_f(x), rel=1e-12)
    assert d.tan[0] == pytest.approx(fd(np_f, x), rel=1e-6)


def test_elementary_functions_pass_through_floats():
    assert dual.exp(0.0) == 1.0
    assert dual.sqrt(4.0) == 2.0
    assert isinstance(dual.log(2.0), float)


def test_multi_lane_tangents_compose():
    # f(a, b) = a * b + a; df/da = b + 1, df/db = a
    a = Dual.seed(2.0, 0, 3)
    b = Dual.seed(5.0, 1, 3)
    f = a * b + a
    assert f.val == 12.0
    np.testing.assert_allclose(f.tan, [6.0, 2.0, 0.0])


def test_const_has_zero_tangent():
    c = Dual.const(3.0, 4)
    assert c.val == 3.0
    np.testing.assert_array_equal(c.tan, np.zeros(4))


def test_chain_through_composed_expression():
    # g(x) = exp(sin(x)^2) / sqrt(x + 2)
    def g(t):
        s = dual.sin(t)
        return dual.exp(s * s) / dual.sqrt(t + 2.0)

    def g_float(t):
        return np.exp(np.sin(t) ** 2) / np.sqrt(t + 2.0)

    x = 1.1
    d = g(seeded(x))
    assert d.val == pytest.approx(g_float(x), rel=1e-12)
    assert d.tan[0] == pytest.approx(fd(g_float, x), rel=1e-6)
