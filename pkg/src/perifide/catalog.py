"""Ready-made models used by the bundled experiments and the tests."""
from __future__ import annotations

import numpy as np

from .model import Growth, Kernel, ModelSpec
from .quad import build_rule, point_rule


def _rule(L, n, kind):
    return build_rule(kind, n, (-L / 2, L / 2))


def laplace_bh(a=1.0, L=2.0, n=50, kind="chebyshev2", beta=(1.0,)):
    return ModelSpec(_rule(L, n, kind), Kernel("laplace", a), Growth("beverton_holt"),
                     beta=beta, name="laplace_bh")


def laplace_bh_dispersal_growth(a=1.0, L=2.0, n=50, kind="chebyshev2", beta=(1.0,),
                                transformed=True):
    """Dispersal followed by Beverton-Holt growth.

    The transformed variant acts on u_t / (alpha beta_t) and has the parameter
    inside the growth argument; the untransformed one multiplies the growth by
    alpha beta_{t+1}.
    """
    rule = _rule(L, n, kind)
    if transformed:
        return ModelSpec(rule, Kernel("laplace", a), Growth("beverton_holt"),
                         order="dispersal_then_growth", beta=beta, name="laplace_bh_dg")
    shifted = tuple(np.roll(np.asarray(beta, dtype=float), -1))
    return ModelSpec(rule, Kernel("laplace", a), Growth("beverton_holt"),
                     order="dispersal_then_growth", beta=shifted, slot="outer",
                     name="laplace_bh_dg_raw")


def gauss_ricker(a=1.0, L=2.0, n=50, kind="chebyshev2", beta=(1.0,)):
    return ModelSpec(_rule(L, n, kind), Kernel("gauss", a), Growth("ricker"), beta=beta,
                     name="gauss_ricker")


def gauss_bh(a=1.0, L=2.0, n=50, kind="chebyshev2", beta=(1.0,)):
    return ModelSpec(_rule(L, n, kind), Kernel("gauss", a), Growth("beverton_holt"),
                     beta=beta, name="gauss_bh")


def cosine_fold(a=0.25, L=2.0, n=32, kind="chebyshev2"):
    """F(u, alpha) = int k (2 alpha + u^2)."""
    return ModelSpec(_rule(L, n, kind), Kernel("cosine", a), Growth("quadratic_fold"),
                     slot="additive", shift=2.0, name="cosine_fold")


def cosine_flip(a=0.25, L=2.0, n=32, kind="chebyshev2"):
    """F(u, alpha) = alpha int k u (u^2 - 1)."""
    return ModelSpec(_rule(L, n, kind), Kernel("cosine", a), Growth("cubic_flip"),
                     name="cosine_flip")


def allee_ide(n=50, kind="chebyshev2", amplitude=10.0):
    """Allee growth with Laplace dispersal on [-1, 1]; the parameter is aL.

    The kernel rate is aL/2, which turns 5(aL/2) exp(-(aL/2)|x-y|) into
    amplitude * k_{aL/2}(x - y).
    """
    return ModelSpec(build_rule(kind, n, (-1.0, 1.0)), Kernel("laplace", 0.5),
                     Growth("allee", beta=amplitude), slot="kernel_rate", name="allee_ide")


def pointmass(growth="ricker", **growth_args):
    return ModelSpec(point_rule(), Kernel("pointmass"), Growth(growth, **growth_args),
                     name=f"pointmass_{growth}")


def pointmass_allee(amplitude=10.0):
    """Scalar Allee map alpha * amplitude u^2/(1+u^2); alpha = 1 recovers the plain map."""
    return pointmass("allee", beta=amplitude)


BUNDLED = {
    "laplace_bh": laplace_bh,
    "laplace_bh_dg": laplace_bh_dispersal_growth,
    "laplace_bh_dg_raw": lambda **kw: laplace_bh_dispersal_growth(transformed=False, **kw),
    "gauss_ricker": gauss_ricker,
    "gauss_bh": gauss_bh,
    "cosine_fold": cosine_fold,
    "cosine_flip": cosine_flip,
    "allee_ide": allee_ide,
    "pointmass_ricker": lambda: pointmass("ricker"),
    "pointmass_allee": pointmass_allee,
    "periodic_laplace_bh": lambda: laplace_bh(n=10, beta=(1.0, 2.0, 0.5)),
    "periodic_gauss_ricker": lambda: gauss_ricker(n=10, beta=(1.5, 0.8)),
    "hassell": lambda: ModelSpec(_rule(2.0, 10, "chebyshev2"), Kernel("gauss", 1.0),
                                 Growth("hassell", c=1.5), name="hassell"),
    "logistic": lambda: ModelSpec(_rule(2.0, 10, "midpoint"), Kernel("laplace", 1.0),
                                  Growth("logistic"), name="logistic"),
}


def omega(i, j, a, L):
    """Closed-form integral of cos(pi a x)^i sin(pi a x)^j over [-L/2, L/2] for small powers."""
    s = np.sin(np.pi * a * L / 2)
    k = np.pi * a
    table = {
        (1, 0): 2 * s / k,
        (2, 0): L / 2 + np.sin(k * L) / (2 * k),
        (0, 2): L / 2 - np.sin(k * L) / (2 * k),
        (3, 0): 2 * (s - s ** 3 / 3) / k,
        (4, 0): 3 * L / 8 + np.sin(k * L) / (2 * k) + np.sin(2 * k * L) / (16 * k),
    }
    if (i, j) not in table:
        raise KeyError(f"omega({i},{j}) not tabulated")
    return float(table[(i, j)])
