"""Forward-mode dual scalars.

A :class:`Dual` carries a value and a tangent vector, so scalar parameter
mappings (normalized controls to filter coefficients and smoothing
constants) propagate exact sensitivities without symbolic derivation. Only
the handful of operations those mappings need are implemented.
"""

from __future__ import annotations

import math

import numpy as np


class Dual:
    __slots__ = ("val", "tan")

    def __init__(self, val: float, tan: np.ndarray):
        self.val = float(val)
        self.tan = np.asarray(tan, dtype=np.float64)

    @staticmethod
    def seed(val: float, index: int, n: int) -> "Dual":
        tan = np.zeros(n)
        tan[index] = 1.0
        return Dual(val, tan)

    @staticmethod
    def const(val: float, n: int) -> "Dual":
        return Dual(val, np.zeros(n))

    def __repr__(self) -> str:
        return f"Dual({self.val!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.tan + other.tan)
        return Dual(self.val + other, self.tan)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.val, -self.tan)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.tan * other.val + self.val * other.tan)
        return Dual(self.val * other, self.tan * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            return Dual(
                self.val * inv,
                (self.tan - self.val * inv * other.tan) * inv,
            )
        return Dual(self.val / other, self.tan / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        return Dual(other * inv, -other * inv * inv * self.tan)


def _lift(fn_val, fn_slope):
    def op(x):
        if isinstance(x, Dual):
            return Dual(fn_val(x.val), fn_slope(x.val) * x.tan)
        return fn_val(x)

    return op


exp = _lift(math.exp, math.exp)
log = _lift(math.log, lambda v: 1.0 / v)
sqrt = _lift(math.sqrt, lambda v: 0.5 / math.sqrt(v))
sin = _lift(math.sin, math.cos)
cos = _lift(math.cos, lambda v: -math.sin(v))
