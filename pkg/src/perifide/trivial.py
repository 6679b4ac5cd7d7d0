"""Bifurcations from the trivial solution of models G(a*beta_t*int k g(u)).

Along u = 0 the linearization at time t is a*beta_t*K with one fixed integral
operator K, so every critical quantity reduces to the spectrum of K.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .errors import InvalidArgument, NotAPitchfork, UnsupportedModel
from .quad import QuadratureRule


@dataclass(frozen=True, eq=False)
class KOperator:
    matrix: np.ndarray
    rule: QuadratureRule
    beta: tuple
    symmetric_core: bool = True

    def apply(self, v):
        return self.matrix @ v

    def symmetrized(self):
        sw = np.sqrt(self.rule.weights)
        return sw[:, None] * self.matrix / sw[None, :]


@dataclass
class TrivialSpectrum:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray   # row i is xi^i at the nodes
    alpha0: np.ndarray
    beta: tuple

    def mode(self, i):
        return float(self.eigenvalues[i]), self.eigenfunctions[i], float(self.alpha0[i])


def build_K(model) -> KOperator:
    try:
        mat = model.linearization_at_zero()
    except UnsupportedModel:
        raise
    return KOperator(mat, model.rule, model.beta, True)


def critical_alpha(lam, beta) -> float:
    beta = np.asarray(beta, dtype=float)
    return 1.0 / (lam * np.prod(beta) ** (1.0 / len(beta)))


def _sign_fix(v):
    amax = np.abs(v).max()
    lead = np.flatnonzero(np.abs(v) >= amax * (1 - 1e-9))[0]
    return -v if v[lead] < 0 else v


def k_spectrum(K: KOperator, count=None) -> TrivialSpectrum:
    """Leading eigenpairs, descending, with unit pairing norm."""
    n = K.matrix.shape[0]
    count = n if count is None else int(count)
    if not 1 <= count <= n:
        raise InvalidArgument(f"mode count must lie in 1..{n}")
    if K.symmetric_core:
        sym = K.symmetrized()
        lam, vec = np.linalg.eigh(0.5 * (sym + sym.T))
        order = np.argsort(-lam)[:count]
        funcs = (vec[:, order] / np.sqrt(K.rule.weights)[:, None]).T
        lam = lam[order]
    else:
        lam, vec = np.linalg.eig(K.matrix)
        order = np.argsort(-lam.real)[:count]
        lam, funcs = lam.real[order], vec[:, order].real.T
        funcs = funcs / np.sqrt((funcs ** 2) @ K.rule.weights)[:, None]
    funcs = np.array([_sign_fix(f) for f in funcs])
    alpha0 = np.array([critical_alpha(x, K.beta) if x > 0 else np.inf for x in lam])
    return TrivialSpectrum(lam, funcs, alpha0, tuple(K.beta))


def growth_factors(lam, alpha_star, beta, theta=None):
    """a_t = (alpha* lam)^t prod_{r<t} beta_r for t = 0..theta-1."""
    beta = np.asarray(beta, dtype=float)
    theta = len(beta) if theta is None else theta
    out = np.ones(theta)
    for t in range(1, theta):
        out[t] = out[t - 1] * alpha_star * lam * beta[(t - 1) % len(beta)]
    return out


@dataclass
class TrivialIndicators:
    g11: float
    g20: float
    g30: float
    gbar: float | None = None


def trivial_indicators(model, spectrum: TrivialSpectrum, i: int, theta=None) -> TrivialIndicators:
    """Closed-form g11, g20, g30 with xi_t = a_t xi0 and eta_t = xi0 / a_t."""
    c2, d2, c3, d3 = model.trivial_coefficients()
    lam, xi0, alpha_star = spectrum.mode(i)
    theta = model.period if theta is None else theta
    a = growth_factors(lam, alpha_star, model.beta, theta)
    w = model.rule.weights
    return TrivialIndicators(g11=theta / alpha_star * float(w @ xi0 ** 2),
                             g20=(c2 + d2) * a.sum() * float(w @ xi0 ** 3),
                             g30=(c3 + d3) * (a ** 2).sum() * float(w @ xi0 ** 4))


def solve_fredholm_wbar(K: KOperator, spectrum: TrivialSpectrum, i: int, theta=1,
                        tol=1e-6) -> np.ndarray:
    """Solve w = lam^-theta K^theta w + xi0^2 with w orthogonal to xi0."""
    lam, xi0, _ = spectrum.mode(i)
    w = K.rule.weights
    if theta % 2 == 0:
        all_lam = np.linalg.eigvals(K.matrix)
        if np.any(np.abs(all_lam + lam) < 1e-8 * abs(lam)):
            raise NotAPitchfork("-lambda is an eigenvalue and the period is even")
    rhs = xi0 ** 2
    solv = float(w @ (xi0 * rhs))
    if abs(solv) > tol * max(1.0, float(w @ np.abs(xi0 * rhs))):
        raise NotAPitchfork(f"source not in the range (projection {solv:.3e})")
    n = len(xi0)
    op = np.eye(n) - np.linalg.matrix_power(K.matrix / lam, theta)
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = op
    big[:n, n] = xi0
    big[n, :n] = w * xi0
    sol = np.linalg.solve(big, np.append(rhs, 0.0))
    return sol[:n]


def trivial_gbar(model, spectrum: TrivialSpectrum, i: int, theta=None) -> tuple:
    """Pitchfork coefficient along the trivial branch through the Fredholm route.

    Returns (gbar, psibar) in the normalization xi_t = a_t xi0, eta_t = xi0 / a_t.
    """
    c2, d2, c3, d3 = model.trivial_coefficients()
    theta = model.period if theta is None else theta
    K = build_K(model)
    lam, xi0, alpha_star = spectrum.mode(i)
    wbar = solve_fredholm_wbar(K, spectrum, i, theta)
    a = growth_factors(lam, alpha_star, model.beta, theta)
    a_ext = np.append(a, 1.0)
    b = alpha_star * np.array([model.beta[t % model.period] for t in range(theta)])
    km = K.matrix
    sq = xi0 ** 2
    # w_0 = sum_s a_s lam^(s - theta) K^(theta - s) wbar
    w0 = np.zeros_like(xi0)
    kp = wbar.copy()
    for s in range(theta, 0, -1):
        w0 += a_ext[s] * lam ** (s - theta) * kp
        kp = km @ kp
    ws = [w0]
    for t in range(theta - 1):
        ws.append(b[t] * (km @ ws[-1]) + a_ext[t + 1] ** 2 * sq)
    xis = np.array([a[t] * xi0 for t in range(theta)])
    psibar = np.array([(c2 + d2) * ws[t] - c2 * xis[t] ** 2 for t in range(theta)])
    weights = model.rule.weights
    etas = np.array([xi0 / a[t] for t in range(theta)])
    proj = float(np.sum(etas * psibar * weights)) / float(np.sum(etas * xis * weights))
    psibar = psibar - proj * xis
    g30 = (c3 + d3) * (a ** 2).sum() * float(weights @ xi0 ** 4)
    cross = 0.0
    for t in range(theta):
        kx, kp_ = km @ xis[t], km @ psibar[t]
        bil = d2 * b[t] ** 2 * kx * kp_ + c2 * b[t] * (km @ (xis[t] * psibar[t]))
        cross += float(weights @ (etas[(t + 1) % theta] * bil))
    return g30 + 3 * cross, psibar


def laplace_roots(aL: float, count: int, xtol=1e-13) -> np.ndarray:
    """Roots nu_0 < nu_1 < ... of tan(aL nu/2) = 1/nu (even i) and cot(aL nu/2) = -1/nu (odd i)."""
    if not aL > 0:
        raise InvalidArgument("aL must be positive")
    half = aL / 2.0
    roots = []
    for i in range(count):
        k = i // 2
        if i % 2 == 0:
            lo, hi = k * np.pi, k * np.pi + np.pi / 2

            def f(th):
                return (th / half) * np.sin(th) - np.cos(th)
        else:
            lo, hi = k * np.pi + np.pi / 2, (k + 1) * np.pi

            def f(th):
                return (th / half) * np.cos(th) + np.sin(th)
        th = bisect(f, lo + 1e-15, hi, xtol=xtol * half, maxiter=200)
        roots.append(th / half)
    return np.array(roots)


def laplace_eigenvalues(aL: float, count: int) -> np.ndarray:
    nu = laplace_roots(aL, count)
    return 1.0 / (1.0 + nu ** 2)


def laplace_eigenfunction(a: float, nu: float, i: int):
    """Unnormalized eigenfunction cos(a nu x) for even i and sin(a nu x) for odd i."""
    if i % 2 == 0:
        return lambda x: np.cos(a * nu * np.asarray(x))
    return lambda x: np.sin(a * nu * np.asarray(x))


def laplace_gbar_autonomous(a: float, L: float, i: int, coefficients) -> float:
    """Closed-form pitchfork coefficient for odd modes of the autonomous Laplace model.

    Normalization: xi = eta = sin(a nu_i x) on [-L/2, L/2].
    """
    c2, d2, c3, d3 = coefficients
    if i % 2 != 1:
        raise InvalidArgument("closed form applies to odd modes")
    if c2 * d2 != 0:
        raise InvalidArgument("closed form needs c2*d2 = 0")
    nu = laplace_roots(a * L, i + 1)[i]
    n2 = nu * nu
    first = (c3 + d3) * (3 * L / 8 + (3 + 5 * n2) / (4 * a * (1 + n2) ** 2))
    second = (c2 + d2) ** 2 * (15 * a * L * (1 + n2) ** 3 + 30 + 80 * n2 + 66 * n2 ** 2) \
        / (24 * a * (nu + nu ** 3) ** 2)
    return first - second


def supercritical_threshold(coefficients) -> bool:
    """True when c3+d3 <= 5(c2+d2)^2/3, i.e. every odd Laplace mode is supercritical."""
    c2, d2, c3, d3 = coefficients
    return c3 + d3 <= 5 * (c2 + d2) ** 2 / 3


def gauss_radius_bounds(a: float, L: float) -> tuple:
    if not (a > 0 and L > 0):
        raise InvalidArgument("a and L must be positive")
    return 0.5 * math.erf(a * L), 2.0 * math.erf(a * L / 2)


def sign_changes(values, zero_tol=1e-10):
    """Number of sign changes over the nodes and the count of near-zero ties."""
    v = np.asarray(values)
    ties = int(np.sum(np.abs(v) < zero_tol))
    s = np.sign(v[np.abs(v) >= zero_tol])
    return int(np.sum(s[1:] != s[:-1])), ties


def sign_change_intervals(values, zero_tol=1e-10):
    v = np.asarray(values)
    idx = np.flatnonzero(np.abs(v) >= zero_tol)
    s = np.sign(v[idx])
    flips = np.flatnonzero(s[1:] != s[:-1])
    return [(int(idx[f]), int(idx[f + 1])) for f in flips]


def interlaced(upper, lower) -> bool:
    """Each node interval holding a zero of ``upper`` (fewer zeros) lies strictly between zeros of ``lower``."""
    zu = [0.5 * (p + q) for p, q in sign_change_intervals(upper)]
    zl = [0.5 * (p + q) for p, q in sign_change_intervals(lower)]
    if len(zl) != len(zu) + 1:
        return False
    return all(zl[k] < zu[k] < zl[k + 1] for k in range(len(zu)))
