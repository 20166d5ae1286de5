"""Exact-rational backward solve over the field Q[sqrt(dt)].

Every walk value on the lattice lives in the quadratic extension of the
rationals by sqrt(dt), and for y-independent polynomial drivers the whole
backward recursion stays inside that field: conditional means are rational
combinations, the control is a field element divided by the rational dt, and
the implicit step degenerates to one exact evaluation.  This gives reference
values with no rounding at all, used to certify the floating solver on small
lattices.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import sqrt

from .errors import GridError, StructuralError


class QuadExt:
    """Exact element a + b*sqrt(m) with a, b, m rational."""

    __slots__ = ("a", "b", "m")

    def __init__(self, a, b=0, m=1):
        self.a = Fraction(a)
        self.b = Fraction(b)
        self.m = Fraction(m)

    def _coerce(self, other):
        if isinstance(other, QuadExt):
            if other.m != self.m and other.b != 0 and self.b != 0:
                raise ValueError("mixed radicands %s and %s" % (self.m, other.m))
            return QuadExt(other.a, other.b, self.m if other.b == 0 else other.m)
        return QuadExt(Fraction(other), 0, self.m)

    def __add__(self, other):
        o = self._coerce(other)
        return QuadExt(self.a + o.a, self.b + o.b, self.m)

    __radd__ = __add__

    def __neg__(self):
        return QuadExt(-self.a, -self.b, self.m)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + self._coerce(other)

    def __mul__(self, other):
        o = self._coerce(other)
        return QuadExt(
            self.a * o.a + self.b * o.b * self.m,
            self.a * o.b + self.b * o.a,
            self.m,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        denom = o.a * o.a - o.b * o.b * self.m
        if denom == 0:
            raise ZeroDivisionError("division by zero element")
        conj = QuadExt(o.a, -o.b, self.m)
        num = self * conj
        return QuadExt(num.a / denom, num.b / denom, self.m)

    def __eq__(self, other):
        o = self._coerce(other)
        return self.a == o.a and self.b == o.b

    def __hash__(self):
        return hash((self.a, self.b, self.m))

    def __float__(self):
        return float(self.a) + float(self.b) * sqrt(float(self.m))

    def __repr__(self):
        if self.b == 0:
            return "QuadExt(%s)" % (self.a,)
        return "QuadExt(%s + %s*sqrt(%s))" % (self.a, self.b, self.m)

    @property
    def is_rational(self):
        return self.b == 0


@dataclass
class ExactSolution:
    steps: int
    dim: int
    dt: Fraction
    Y: list  # per slice, dict node-tuple -> QuadExt
    Z: list  # per slice < N, dict node-tuple -> tuple of QuadExt
    dm: list  # per slice < N, dict (node-tuple, choice) -> QuadExt

    @property
    def y0(self) -> QuadExt:
        return self.Y[0][()]


def _signs(choice: int, dim: int):
    return tuple(1 if ((choice >> (dim - 1 - k)) & 1) == 0 else -1 for k in range(dim))


def _exact_driver(name: str, m: Fraction):
    if name == "zero":
        return lambda z: QuadExt(0, 0, m)
    if name.startswith("constant:"):
        c = Fraction(name.split(":", 1)[1])
        return lambda z: QuadExt(c, 0, m)
    if name == "quadratic":
        def quad(z):
            acc = QuadExt(0, 0, m)
            for zk in z:
                acc = acc + zk * zk
            return acc * Fraction(1, 2)

        return quad
    raise GridError("no exact form for driver %r" % (name,))


def exact_solve(steps: int, dim: int, horizon, driver: str, terminal) -> ExactSolution:
    """Backward solve with exact arithmetic; y-independent drivers only.

    terminal is a callable taking the walk path as a tuple of per-time
    tuples of QuadExt (grid times 0..steps, each of length dim) and returning
    a QuadExt or rational.  Supported drivers: zero, constant:<rational>,
    quadratic.
    """
    if steps < 1 or dim < 1:
        raise GridError("need steps >= 1 and dim >= 1")
    m = Fraction(horizon) / steps
    if m <= 0:
        raise GridError("horizon must be positive")
    f = _exact_driver(driver, m)
    nchoice = 2 ** dim
    sqrt_dt = QuadExt(0, 1, m)
    zero = QuadExt(0, 0, m)
    inv_count = Fraction(1, nchoice)

    def walk(choices):
        vals = [tuple(zero for _ in range(dim))]
        for c in choices:
            s = _signs(c, dim)
            vals.append(tuple(vals[-1][k] + sqrt_dt * s[k] for k in range(dim)))
        return tuple(vals)

    terminal_slice = {}
    for choices in product(range(nchoice), repeat=steps):
        xi = terminal(walk(choices))
        if not isinstance(xi, QuadExt):
            xi = QuadExt(Fraction(xi), 0, m)
        elif xi.m != m and xi.b != 0:
            raise StructuralError("terminal produced a value outside Q[sqrt(dt)]")
        terminal_slice[choices] = xi

    Y = [None] * (steps + 1)
    Z = [None] * steps
    dM = [None] * steps
    Y[steps] = terminal_slice
    for i in range(steps - 1, -1, -1):
        y_here, z_here, dm_here = {}, {}, {}
        for node in product(range(nchoice), repeat=i):
            children = [Y[i + 1][node + (c,)] for c in range(nchoice)]
            mean = zero
            for v in children:
                mean = mean + v
            mean = mean * inv_count
            zvec = []
            for k in range(dim):
                acc = zero
                for c, v in enumerate(children):
                    acc = acc + v * (sqrt_dt * _signs(c, dim)[k])
                zvec.append(acc * inv_count / m)
            zvec = tuple(zvec)
            for c, v in enumerate(children):
                s = _signs(c, dim)
                drift = zero
                for k in range(dim):
                    drift = drift + zvec[k] * (sqrt_dt * s[k])
                dm_here[node + (c,)] = v - mean - drift
            y_here[node] = mean + f(zvec) * m
            z_here[node] = zvec
        Y[i] = y_here
        Z[i] = z_here
        dM[i] = dm_here
    return ExactSolution(steps=steps, dim=dim, dt=m, Y=Y, Z=Z, dm=dM)


def endpoint_component(k: int = 0):
    """Terminal functional: component k of the final walk value."""

    def phi(path):
        return path[-1][k]

    return phi


def node_index_for(choices, dim: int) -> int:
    """Full-path slice index of a choice tuple, matching the lattice layout."""
    idx = 0
    base = 2 ** dim
    for c in choices:
        idx = idx * base + c
    return idx
