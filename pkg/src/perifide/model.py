"""Kernels, growth functions and Nystrom-discretized right-hand sides.

A model evaluates

    F_t(u, a)(x_i) = q_t(a) * H( p_t(a) * sum_j w_j k(x_i, y_j) g(u_j, a) )

where exactly one of ``g`` (inner growth) and ``H`` (outer growth) is the
identity, depending on the composition order. ``p_t`` and ``q_t`` carry the
periodic coefficients and, depending on the parameter slot, the parameter.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, InvalidArgument, UnsupportedModel
from .quad import QuadratureRule, _values

KERNEL_KINDS = ("laplace", "gauss", "cosine", "pointmass")
GROWTH_KINDS = ("beverton_holt", "ricker", "logistic", "hassell", "allee",
                "cubic_flip", "quadratic_fold", "identity")
ORDERS = ("growth_then_dispersal", "dispersal_then_growth")
SLOTS = ("multiplicative", "outer", "additive", "kernel_rate")
DERIVATIVE_ORDERS = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0))


@dataclass(frozen=True)
class Kernel:
    kind: str
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise InvalidArgument(f"unknown kernel {self.kind!r}")
        if self.kind != "pointmass" and not self.a > 0:
            raise InvalidArgument("kernel rate must be positive")

    def __call__(self, x, y, rate=None):
        return self.profile(np.subtract(x, y), self.a if rate is None else rate)[0]

    def profile(self, r, rate, order=0):
        """Kernel value as a function of r = x - y, plus rate derivatives up to ``order``."""
        r = np.asarray(r, dtype=float)
        a = rate
        if self.kind == "laplace":
            ar = np.abs(r)
            e = np.exp(-a * ar)
            out = [0.5 * a * e, 0.5 * e * (1 - a * ar), 0.5 * e * ar * (a * ar - 2)]
        elif self.kind == "gauss":
            r2 = r * r
            e = np.exp(-a * a * r2) / np.sqrt(np.pi)
            out = [a * e, e * (1 - 2 * a * a * r2), e * 2 * a * r2 * (2 * a * a * r2 - 3)]
        elif self.kind == "cosine":
            inside = 2 * a * np.abs(r) <= 1 + 1e-14
            out = [np.where(inside, 0.5 * np.pi * a * np.cos(np.pi * a * r), 0.0)]
            if order > 0:
                raise UnsupportedModel("cosine kernel has no rate derivatives")
        else:
            out = [np.ones_like(r), np.zeros_like(r), np.zeros_like(r)]
        return out[: order + 1]

    def to_dict(self):
        return {"kind": self.kind, "a": self.a}


@dataclass(frozen=True)
class Growth:
    kind: str
    c: float = 1.0      # hassell exponent
    beta: float = 1.0   # allee amplitude

    def __post_init__(self):
        if self.kind not in GROWTH_KINDS:
            raise InvalidArgument(f"unknown growth function {self.kind!r}")

    def domain_violation(self, z):
        """Index of the first argument outside the domain, or None."""
        if self.kind in ("beverton_holt", "hassell"):
            bad = np.flatnonzero(~(z > -1.0))
            return int(bad[0]) if bad.size else None
        bad = np.flatnonzero(~np.isfinite(z))
        return int(bad[0]) if bad.size else None

    def __call__(self, z):
        return self.derivs(z, 0)[0]

    def derivs(self, z, order=3):
        """[g, g', g'', g'''] truncated to ``order``."""
        z = np.asarray(z, dtype=float)
        k = self.kind
        if k == "beverton_holt":
            s = 1.0 / (1.0 + z)
            out = [z * s, s ** 2, -2 * s ** 3, 6 * s ** 4]
        elif k == "ricker":
            e = np.exp(-z)
            out = [z * e, (1 - z) * e, (z - 2) * e, (3 - z) * e]
        elif k == "logistic":
            out = [z * (1 - z), 1 - 2 * z, np.full_like(z, -2.0), np.zeros_like(z)]
        elif k == "hassell":
            c = self.c
            s = 1.0 + z
            out = [z * np.power(s, -c),
                   np.power(s, -c - 1) * (1 + (1 - c) * z),
                   -c * np.power(s, -c - 2) * (2 + (1 - c) * z),
                   c * (1 + c) * np.power(s, -c - 3) * (3 + (1 - c) * z)]
        elif k == "allee":
            b = self.beta
            q = 1.0 + z * z
            out = [b * z * z / q, 2 * b * z / q ** 2, 2 * b * (1 - 3 * z * z) / q ** 3,
                   24 * b * z * (z * z - 1) / q ** 4]
        elif k == "cubic_flip":
            out = [z * (z * z - 1), 3 * z * z - 1, 6 * z, np.full_like(z, 6.0)]
        elif k == "quadratic_fold":
            out = [z * z, 2 * z, np.full_like(z, 2.0), np.zeros_like(z)]
        else:
            out = [z.copy(), np.ones_like(z), np.zeros_like(z), np.zeros_like(z)]
        return out[: order + 1]

    def at_zero(self):
        return [float(v[0]) for v in self.derivs(np.zeros(1))]

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "hassell":
            d["c"] = self.c
        if self.kind == "allee":
            d["beta"] = self.beta
        return d


IDENTITY = Growth("identity")


class RightHandSide:
    """Interface shared by models and the perturbed-motion wrapper.

    Subclasses provide ``rule``, ``period``, ``rhs``, ``d1_matrix``, ``deriv``
    and ``dual_d1``. States are plain float arrays of node values.
    """

    rule: QuadratureRule
    period: int

    def d1(self, t, u, alpha, v):
        return self.deriv(t, u, alpha, (1, 0), v)

    def d2_max(self, states, alpha):
        """Max-norm of the parameter derivative along a tuple of states."""
        return max(float(np.max(np.abs(self.deriv(t, s, alpha, (0, 1)))))
                   for t, s in enumerate(states))


def _check_order(order, dirs):
    order = tuple(order)
    if order not in DERIVATIVE_ORDERS:
        raise InvalidArgument(f"unsupported derivative order {order}")
    if len(dirs) != order[0]:
        raise InvalidArgument(f"order {order} takes {order[0]} directions, got {len(dirs)}")
    return order


@dataclass(frozen=True, eq=False)
class ModelSpec(RightHandSide):
    rule: QuadratureRule
    kernel: Kernel
    growth: Growth
    order: str = "growth_then_dispersal"
    beta: tuple = (1.0,)
    slot: str = "multiplicative"
    shift: float = 2.0
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.order not in ORDERS:
            raise InvalidArgument(f"unknown composition order {self.order!r}")
        if self.slot not in SLOTS:
            raise InvalidArgument(f"unknown parameter slot {self.slot!r}")
        beta = tuple(float(b) for b in np.atleast_1d(self.beta))
        if not beta or any(not b > 0 for b in beta):
            raise InvalidArgument("periodic coefficients must be positive")
        object.__setattr__(self, "beta", beta)
        if self.slot == "kernel_rate" and self.kernel.kind not in ("laplace", "gauss"):
            raise InvalidArgument("kernel_rate slot needs a laplace or gauss kernel")
        if self.kernel.kind == "pointmass" and self.rule.size != 1:
            raise InvalidArgument("pointmass kernel lives on a single-node rule")

    @property
    def period(self):
        return len(self.beta)

    @property
    def inner(self):
        return self.growth if self.order == "growth_then_dispersal" else IDENTITY

    @property
    def outer(self):
        return IDENTITY if self.order == "growth_then_dispersal" else self.growth

    @cached_property
    def _diff(self):
        x = self.rule.nodes
        return x[:, None] - x[None, :]

    @cached_property
    def _k0(self):
        return self.kernel.profile(self._diff, self.kernel.a)[0]

    def kernel_matrices(self, alpha, order=0):
        """Unweighted kernel matrix and its parameter derivatives."""
        if self.slot == "kernel_rate":
            prof = self.kernel.profile(self._diff, self.kernel.a * alpha, order)
            return [m * self.kernel.a ** i for i, m in enumerate(prof)]
        zero = np.zeros_like(self._k0)
        return [self._k0, zero, zero][: order + 1]

    def coefficients(self, t, alpha):
        """(p, p', p''), (q, q', q'') at time t."""
        b = self.beta[t % self.period]
        if self.slot == "multiplicative":
            return (alpha * b, b, 0.0), (1.0, 0.0, 0.0)
        if self.slot == "outer":
            return (1.0, 0.0, 0.0), (alpha * b, b, 0.0)
        return (b, 0.0, 0.0), (1.0, 0.0, 0.0)

    def _inner_terms(self, u, alpha, order, t):
        bad = self.inner.domain_violation(u)
        if bad is not None:
            raise DomainError(f"state outside the growth domain at node {bad}", node=bad, t=t)
        gs = self.inner.derivs(u, order)
        if self.slot == "additive":
            gs[0] = gs[0] + self.shift * alpha
        return gs

    def _eval(self, t, u, alpha, order, alpha_order=0):
        u = np.asarray(u, dtype=float)
        w = self.rule.weights
        gs = self._inner_terms(u, alpha, order, t)
        ks = self.kernel_matrices(alpha, alpha_order)
        (p, pa, paa), (q, qa, qaa) = self.coefficients(t, alpha)
        ks_w = [k * w[None, :] for k in ks]
        s = p * (ks_w[0] @ gs[0])
        bad = self.outer.domain_violation(s)
        if bad is not None:
            raise DomainError(f"dispersed state outside the growth domain at node {bad}",
                              node=bad, t=t)
        hs = self.outer.derivs(s, order)
        return dict(u=u, gs=gs, ks=ks_w, p=(p, pa, paa), q=(q, qa, qaa), s=s, hs=hs)

    def rhs(self, t, u, alpha):
        e = self._eval(t, _values(self.rule, u), alpha, 0)
        return e["q"][0] * e["hs"][0]

    def d1_matrix(self, t, u, alpha):
        e = self._eval(t, _values(self.rule, u), alpha, 1)
        p, q = e["p"][0], e["q"][0]
        return (q * e["hs"][1])[:, None] * (p * e["ks"][0]) * e["gs"][1][None, :]

    def _s_alpha(self, e, alpha):
        (p, pa, paa), gs, ks = e["p"], e["gs"], e["ks"]
        ga = self.shift if self.slot == "additive" else 0.0
        s_a = pa * (ks[0] @ gs[0]) + p * (ks[1] @ gs[0]) + p * ga * ks[0].sum(axis=1)
        s_aa = (paa * (ks[0] @ gs[0]) + p * (ks[2] @ gs[0]) + 2 * pa * (ks[1] @ gs[0])
                + 2 * pa * ga * ks[0].sum(axis=1) + 2 * p * ga * ks[1].sum(axis=1))
        return s_a, s_aa

    def deriv(self, t, u, alpha, order, *dirs):
        """Partial derivative of order (i, j) in (state, parameter) applied to i directions."""
        i, j = _check_order(order, dirs)
        u = _values(self.rule, u)
        dirs = [_values(self.rule, v) for v in dirs]
        e = self._eval(t, u, alpha, i + j, 2 if j else 0)
        p, pa, _ = e["p"]
        q, qa, qaa = e["q"]
        gs, hs, k = e["gs"], e["hs"], e["ks"][0]

        def s_u(v, n=1):
            return p * (k @ (gs[n] * v))

        if (i, j) == (1, 0):
            return q * hs[1] * s_u(dirs[0])
        if (i, j) == (2, 0):
            v, w = dirs
            return q * (hs[2] * s_u(v) * s_u(w) + hs[1] * s_u(v * w, 2))
        if (i, j) == (3, 0):
            a, b, c = dirs
            sa, sb, sc = s_u(a), s_u(b), s_u(c)
            return q * (hs[3] * sa * sb * sc
                        + hs[2] * (sa * s_u(b * c, 2) + sb * s_u(a * c, 2) + sc * s_u(a * b, 2))
                        + hs[1] * s_u(a * b * c, 3))
        s_a, s_aa = self._s_alpha(e, alpha)
        if (i, j) == (0, 1):
            return q * hs[1] * s_a + qa * hs[0]
        if (i, j) == (0, 2):
            return q * (hs[2] * s_a ** 2 + hs[1] * s_aa) + 2 * qa * hs[1] * s_a + qaa * hs[0]
        # (1, 1)
        v = dirs[0]
        gv = gs[1] * v
        s_ua = pa * (k @ gv) + p * (e["ks"][1] @ gv)
        su = s_u(v)
        return q * (hs[2] * s_a * su + hs[1] * s_ua) + qa * hs[1] * su

    def dual_d1(self, t, u, alpha, w):
        """Dual of the state derivative with respect to the weighted pairing."""
        u = _values(self.rule, u)
        w = _values(self.rule, w)
        e = self._eval(t, u, alpha, 1)
        p, q = e["p"][0], e["q"][0]
        k0 = self.kernel_matrices(alpha)[0]
        return p * e["gs"][1] * (k0.T @ (q * e["hs"][1] * self.rule.weights * w))

    # trivial-branch structure -------------------------------------------------

    def newrhs_form(self) -> bool:
        if self.slot not in ("multiplicative", "outer"):
            return False
        if self.slot == "outer" and self.order == "dispersal_then_growth":
            return False
        g0 = self.growth.at_zero()
        return abs(g0[0]) == 0.0 and g0[1] != 0.0

    def trivial_coefficients(self):
        """(c2, d2, c3, d3) of the growth around the trivial state."""
        if not self.newrhs_form():
            raise UnsupportedModel(f"model {self.name or self.growth.kind} is not of the "
                                   "form G(alpha*beta_t*integral of k*g(u))")
        g = self.inner.at_zero()
        h = self.outer.at_zero()
        if g[2] * h[2] != 0.0:
            raise UnsupportedModel("inner and outer growth both curved at zero")
        return (g[2] / g[1], h[2] / h[1] ** 2, g[3] / g[1], h[3] / h[1] ** 3)

    def linearization_at_zero(self):
        """Nystrom matrix of the trivial-branch operator (weights folded in)."""
        if not self.newrhs_form():
            raise UnsupportedModel("trivial-branch operator needs the newrhs form")
        g = self.inner.at_zero()
        h = self.outer.at_zero()
        return h[1] * g[1] * self._k0 * self.rule.weights[None, :]

    def with_rule(self, rule):
        return ModelSpec(rule, self.kernel, self.growth, self.order, self.beta, self.slot,
                         self.shift, self.name, dict(self.meta))

    def to_dict(self):
        return {"name": self.name, "kernel": self.kernel.to_dict(), "growth": self.growth.to_dict(),
                "order": self.order, "beta": list(self.beta), "slot": self.slot,
                "shift": self.shift,
                "rule": {"kind": self.rule.kind, "n": self.rule.n, "a": self.rule.a,
                         "b": self.rule.b}}


def rhs_eval(model, t, u, alpha):
    return model.rhs(t, u, alpha)


def apply_derivative(model, t, u, alpha, orders, *directions):
    return model.deriv(t, u, alpha, orders, *directions)


def apply_dual_d1(model, t, u, alpha, w):
    return model.dual_d1(t, u, alpha, w)


def trivial_coefficients(model):
    return model.trivial_coefficients()


def transform_states(states, alpha, beta):
    """Dispersal-growth change of variables u_t -> u_t / (alpha * beta_t)."""
    beta = np.atleast_1d(beta)
    return [np.asarray(s) / (alpha * beta[t % len(beta)]) for t, s in enumerate(states)]


def untransform_states(states, alpha, beta):
    beta = np.atleast_1d(beta)
    return [np.asarray(s) * (alpha * beta[t % len(beta)]) for t, s in enumerate(states)]
