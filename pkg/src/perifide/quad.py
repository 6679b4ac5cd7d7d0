"""Composite quadrature rules on an interval and the discrete measure they induce."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

KINDS = ("midpoint", "trapezoidal", "chebyshev2")


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    kind: str
    a: float
    b: float
    n: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def measure(self) -> float:
        return self.b - self.a

    @property
    def is_symmetric(self) -> bool:
        if not np.isclose(self.a, -self.b):
            return False
        return (np.allclose(self.nodes, -self.nodes[::-1], rtol=0, atol=1e-14 * max(1.0, self.b))
                and np.allclose(self.weights, self.weights[::-1], rtol=1e-14, atol=0))

    def same_as(self, other: "QuadratureRule") -> bool:
        return self is other or (
            self.kind == other.kind and self.n == other.n
            and self.a == other.a and self.b == other.b and self.size == other.size
            and np.array_equal(self.nodes, other.nodes))

    def function(self, values) -> "DiscreteFunction":
        return DiscreteFunction(self, values)

    def sample(self, f) -> "DiscreteFunction":
        return DiscreteFunction(self, f(self.nodes))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "n": self.n,
                "nodes": self.nodes.tolist(), "weights": self.weights.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "QuadratureRule":
        if d["kind"] == "point":
            return point_rule(d["a"])
        rule = build_rule(d["kind"], int(d["n"]), (d["a"], d["b"]))
        if "nodes" in d and not np.allclose(rule.nodes, d["nodes"], rtol=0, atol=1e-13):
            raise InvalidArgument("serialized nodes do not match the rule definition")
        return rule


def build_rule(kind: str, n: int, interval) -> QuadratureRule:
    """Composite rule with ``n`` subintervals on ``interval``.

    chebyshev2 is the composite two-point Gauss-Legendre rule, so it has 2n nodes.
    """
    a, b = (float(x) for x in interval)
    if kind not in KINDS:
        raise InvalidArgument(f"unknown quadrature kind {kind!r}; expected one of {KINDS}")
    if int(n) != n or n < 1:
        raise InvalidArgument(f"subinterval count must be a positive integer, got {n!r}")
    if not b > a:
        raise InvalidArgument(f"degenerate interval [{a}, {b}]")
    n = int(n)
    h = (b - a) / n
    if kind == "midpoint":
        nodes = a + h * (np.arange(1, n + 1) - 0.5)
        weights = np.full(n, h)
    elif kind == "trapezoidal":
        nodes = np.linspace(a, b, n + 1)
        weights = np.full(n + 1, h)
        weights[[0, -1]] = h / 2
    else:
        mids = a + h * (np.arange(1, n + 1) - 0.5)
        off = h / (2 * np.sqrt(3.0))
        nodes = np.sort(np.concatenate([mids - off, mids + off]))
        weights = np.full(2 * n, h / 2)
    return QuadratureRule(kind, a, b, n, nodes, weights)


def point_rule(x: float = 0.0) -> QuadratureRule:
    """Single node of unit mass: the habitat collapses to one patch."""
    return QuadratureRule("point", float(x), float(x), 1, np.array([float(x)]), np.array([1.0]))


def _values(rule, u):
    if isinstance(u, DiscreteFunction):
        if not u.rule.same_as(rule):
            raise InvalidArgument("function lives on a different rule")
        return u.values
    arr = np.asarray(u, dtype=float)
    if arr.shape[-1] != rule.size:
        raise InvalidArgument(f"expected {rule.size} node values, got {arr.shape[-1]}")
    return arr


def integrate(rule: QuadratureRule, u) -> float:
    return float(rule.weights @ _values(rule, u))


def pairing(rule: QuadratureRule, u, v) -> float:
    uv, vv = _values(rule, u), _values(rule, v)
    return float(rule.weights @ (uv * vv))


class DiscreteFunction:
    """Node values of a function on a quadrature rule."""

    __slots__ = ("rule", "values")
    __array_priority__ = 20

    def __init__(self, rule: QuadratureRule, values):
        values = np.array(values, dtype=float)
        if values.shape != (rule.size,):
            raise InvalidArgument(f"expected {rule.size} node values, got shape {values.shape}")
        values.setflags(write=False)
        self.rule = rule
        self.values = values

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.rule.size

    def __repr__(self):
        return f"DiscreteFunction(N={self.rule.size}, kind={self.rule.kind})"

    def _other(self, other):
        if isinstance(other, DiscreteFunction):
            if not other.rule.same_as(self.rule):
                raise InvalidArgument("functions live on different rules")
            return other.values
        return other

    def __add__(self, other):
        return DiscreteFunction(self.rule, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return DiscreteFunction(self.rule, self.values - self._other(other))

    def __rsub__(self, other):
        return DiscreteFunction(self.rule, self._other(other) - self.values)

    def __mul__(self, other):
        return DiscreteFunction(self.rule, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return DiscreteFunction(self.rule, self.values / self._other(other))

    def __neg__(self):
        return DiscreteFunction(self.rule, -self.values)

    def __pow__(self, p):
        return DiscreteFunction(self.rule, self.values ** p)

    def integral(self) -> float:
        return integrate(self.rule, self)

    def pair(self, other) -> float:
        return pairing(self.rule, self, other)
