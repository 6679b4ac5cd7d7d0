"""Periodic orbits as zeros of the stacked cyclic operator.

A theta-periodic solution (u_0, ..., u_{theta-1}) is stored as a (theta, N)
array. The cyclic residual has block 0 equal to F_{theta-1}(u_{theta-1}) - u_0
and block t+1 equal to F_t(u_t) - u_{t+1}.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from .errors import (DomainError, HyperbolicityViolated, InvalidArgument, NoConvergence,
                     NonSimpleEigenvalue, SingularJacobian)
from .quad import QuadratureRule


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    states: np.ndarray
    alpha: float
    residual_norm: float = 0.0
    rule: QuadratureRule | None = field(default=None, repr=False)

    def __post_init__(self):
        s = np.array(self.states, dtype=float, ndmin=2)
        s.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def theta(self) -> int:
        return self.states.shape[0]

    def stacked(self) -> np.ndarray:
        return self.states.ravel()

    def to_dict(self) -> dict:
        d = {"theta": self.theta, "alpha": self.alpha, "residual_norm": self.residual_norm,
             "states": self.states.tolist()}
        if self.rule is not None:
            d["rule"] = {"kind": self.rule.kind, "a": self.rule.a, "b": self.rule.b,
                         "n": self.rule.n}
        return d

    @classmethod
    def from_dict(cls, d, rule=None):
        return cls(np.array(d["states"]), d["alpha"], d.get("residual_norm", 0.0), rule)


@dataclass
class FloquetData:
    multipliers: np.ndarray
    raw_eigs: np.ndarray
    morse_index: int
    critical: np.ndarray
    theta: int
    degenerate: list = field(default_factory=list)

    def leading(self, count=4):
        order = np.argsort(-np.abs(self.multipliers), kind="stable")
        return self.multipliers[order[:count]]


@dataclass
class EigSequences:
    xi: np.ndarray
    eta: np.ndarray
    multiplier: float
    normalization: str = "unit"
    residuals: tuple = (0.0, 0.0)

    @property
    def theta(self):
        return self.xi.shape[0]

    def rescaled(self, rule, xi0=None, eta0=None):
        """Rescale so that xi_0 and eta_0 best match the given reference functions."""
        xi, eta = self.xi, self.eta
        if xi0 is not None:
            xi0 = np.asarray(xi0, dtype=float)
            xi = xi * (pairing_w(rule, xi0, xi0) / pairing_w(rule, xi[0], xi0))
        if eta0 is not None:
            eta0 = np.asarray(eta0, dtype=float)
            eta = eta * (pairing_w(rule, eta0, eta0) / pairing_w(rule, eta[0], eta0))
        return EigSequences(xi, eta, self.multiplier, "reference", self.residuals)


def pairing_w(rule, u, v):
    return float(rule.weights @ (np.asarray(u) * np.asarray(v)))


def block_pairing(rule, u, v) -> float:
    """Sum over time of the weighted pairing of two (theta, N) arrays."""
    return float(np.sum(np.asarray(u) * np.asarray(v) * rule.weights[None, :]))


def _unpack(orbit, alpha=None):
    if isinstance(orbit, PeriodicOrbit):
        return orbit.states, orbit.alpha
    if alpha is None:
        raise InvalidArgument("parameter value required")
    return np.array(orbit, dtype=float, ndmin=2), float(alpha)


def doubled(orbit: PeriodicOrbit) -> PeriodicOrbit:
    """The same orbit read with twice its period."""
    return PeriodicOrbit(np.vstack([orbit.states, orbit.states]), orbit.alpha,
                         orbit.residual_norm, orbit.rule)


def _check_period(model, theta):
    if theta % model.period:
        raise InvalidArgument(f"period {theta} is not a multiple of the basic period "
                              f"{model.period}")


def cyclic_residual(model, orbit, alpha=None) -> np.ndarray:
    states, alpha = _unpack(orbit, alpha)
    theta = states.shape[0]
    _check_period(model, theta)
    images = np.array([model.rhs(t, states[t], alpha) for t in range(theta)])
    return np.roll(images, 1, axis=0) - states


def jacobian_blocks(model, states, alpha):
    return [model.d1_matrix(t, states[t], alpha) for t in range(states.shape[0])]


def cyclic_matrix(blocks) -> np.ndarray:
    """Block-cyclic matrix with block (t+1, t) = blocks[t]; no identity subtracted."""
    theta = len(blocks)
    n = blocks[0].shape[0]
    m = np.zeros((theta * n, theta * n))
    for t, b in enumerate(blocks):
        r = (t + 1) % theta
        m[r * n:(r + 1) * n, t * n:(t + 1) * n] += b
    return m


def assemble_jacobian(model, orbit, alpha=None) -> np.ndarray:
    states, alpha = _unpack(orbit, alpha)
    _check_period(model, states.shape[0])
    m = cyclic_matrix(jacobian_blocks(model, states, alpha))
    m[np.diag_indices_from(m)] -= 1.0
    return m


def alpha_column(model, orbit, alpha=None) -> np.ndarray:
    """Stacked parameter derivative of the cyclic operator."""
    states, alpha = _unpack(orbit, alpha)
    d = np.array([model.deriv(t, states[t], alpha, (0, 1)) for t in range(states.shape[0])])
    return np.roll(d, 1, axis=0).ravel()


def _solve(a, b, error=SingularJacobian):
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            return sla.solve(a, b)
        except (sla.LinAlgError, sla.LinAlgWarning) as exc:
            raise error(f"linear system is numerically singular: {exc}") from None


def solve_periodic(model, initial, alpha, tol=1e-10, max_iter=50, max_halvings=8,
                   rule=None) -> PeriodicOrbit:
    """Damped Newton iteration on the cyclic residual."""
    x = np.array(initial, dtype=float, ndmin=2)
    _check_period(model, x.shape[0])
    rule = rule or getattr(model, "rule", None)
    trace = []
    try:
        r = cyclic_residual(model, x, alpha)
    except DomainError as exc:
        raise NoConvergence(f"initial guess outside the domain: {exc}", trace) from exc
    norm = float(np.max(np.abs(r)))
    for _ in range(max_iter + 1):
        trace.append(norm)
        if norm < tol:
            return PeriodicOrbit(x, alpha, norm, rule)
        if len(trace) > max_iter:
            break
        jac = assemble_jacobian(model, x, alpha)
        step = _solve(jac, -r.ravel()).reshape(x.shape)
        lam = 1.0
        best = None
        for _ in range(max_halvings + 1):
            trial = x + lam * step
            try:
                rt = cyclic_residual(model, trial, alpha)
                nt = float(np.max(np.abs(rt)))
            except DomainError:
                nt = np.inf
            if np.isfinite(nt):
                best = (trial, rt, nt)
                if nt < norm:
                    break
            lam *= 0.5
        if best is None:
            raise NoConvergence("every damped step left the domain", trace)
        x, r, norm = best
    raise NoConvergence(f"no convergence in {max_iter} iterations (residual {norm:.3e})", trace)


def _cluster(values, tol):
    n = len(values)
    if n == 0:
        return np.zeros(0, dtype=int), 0
    diff = np.abs(values[:, None] - values[None, :])
    scale = np.maximum(1.0, np.maximum(np.abs(values)[:, None], np.abs(values)[None, :]))
    ncomp, labels = connected_components(diff <= tol * scale, directed=False)
    return labels, ncomp


def _group(powered, theta):
    """Split into groups of exactly theta nearest values and return the group means."""
    left = list(np.argsort(-np.abs(powered), kind="stable"))
    means = []
    while left:
        first = left.pop(0)
        if theta > 1:
            dist = np.abs(powered[left] - powered[first])
            take = sorted(np.argsort(dist, kind="stable")[: theta - 1], reverse=True)
            members = [first] + [left.pop(k) for k in take]
        else:
            members = [first]
        means.append(powered[members].mean())
    return np.array(means, dtype=complex)


def floquet(model, orbit, tol=1e-6, unit_tol=1e-12) -> FloquetData:
    """Floquet multipliers from the eigenvalues of the cyclic Jacobian plus identity.

    The cyclic eigenvalues raised to the power theta repeat every multiplier exactly
    theta times; clusters larger than that on the unit circle are flagged.
    """
    states, alpha = _unpack(orbit)
    theta = states.shape[0]
    m = cyclic_matrix(jacobian_blocks(model, states, alpha))
    try:
        lam = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigensolver failed: {exc}") from exc
    powered = lam ** theta
    mults = _group(powered, theta)
    labels, ncomp = _cluster(powered, tol)
    degenerate = []
    for c in range(ncomp):
        members = powered[labels == c]
        center = members.mean()
        if len(members) % theta or (len(members) > theta and abs(abs(center) - 1) < 1e-3):
            degenerate.append({"center": complex(center), "size": len(members)})
    mults = mults[np.lexsort((mults.imag, -np.abs(mults)))]
    mults = np.where(np.abs(mults.imag) < 1e-12 * np.maximum(1, np.abs(mults)), mults.real, mults)
    dist = np.abs(np.abs(mults) - 1)
    critical = mults[dist <= dist.min() + 1e-9] if len(mults) else mults
    morse = int(np.sum(np.abs(mults) > 1 + unit_tol))
    return FloquetData(mults, lam - 1.0, morse, critical, theta, degenerate)


def _propagate_forward(blocks, x0):
    out = [x0]
    for b in blocks[:-1]:
        out.append(b @ out[-1])
    return np.array(out)


def _propagate_dual(model, states, alpha, y0):
    theta = states.shape[0]
    out = np.zeros_like(states)
    out[0] = y0
    nxt = y0
    for t in range(theta - 1, 0, -1):
        nxt = model.dual_d1(t, states[t], alpha, nxt)
        out[t] = nxt
    return out


def eig_sequences(model, orbit, target_multiplier=1, tol=1e-6) -> EigSequences:
    """Variational and dual variational solutions for a simple multiplier +1 or -1.

    For -1 the orbit is first embedded at twice its period.
    """
    if target_multiplier not in (1, -1):
        raise InvalidArgument("target multiplier must be +1 or -1")
    if target_multiplier == -1:
        fl = floquet(model, orbit)
        if not np.any(np.abs(fl.multipliers + 1.0) < tol):
            raise InvalidArgument(f"-1 is not a Floquet multiplier (nearest {fl.critical})")
        return eig_sequences(model, doubled(orbit), 1, tol)
    states, alpha = orbit.states, orbit.alpha
    rule = model.rule
    fl = floquet(model, orbit)
    near = np.flatnonzero(np.abs(fl.multipliers - 1.0) < tol)
    if near.size == 0:
        raise InvalidArgument(f"1 is not a Floquet multiplier (nearest {fl.critical})")
    if near.size > 1:
        raise NonSimpleEigenvalue(f"multiplier 1 has multiplicity {near.size}")
    theta, n = states.shape
    jac = assemble_jacobian(model, orbit)
    u, _, vt = np.linalg.svd(jac)
    blocks = jacobian_blocks(model, states, alpha)
    xi = _propagate_forward(blocks, vt[-1][:n])
    left = u[:, -1].reshape(theta, n)
    eta = _propagate_dual(model, states, alpha, left[0] / rule.weights)
    xi = xi / np.sqrt(block_pairing(rule, xi, xi))
    x0 = xi[0]
    amax = np.abs(x0).max()
    lead = np.flatnonzero(np.abs(x0) >= amax * (1 - 1e-9))[0]
    if x0[lead] < 0:
        xi = -xi
    eta = eta / block_pairing(rule, eta, xi)
    res_xi = np.abs(blocks[-1] @ xi[-1] - xi[0]).max()
    res_eta = np.abs(model.dual_d1(0, states[0], alpha, eta[1 % theta]) - eta[0]).max()
    return EigSequences(xi, eta, float(np.real(fl.multipliers[near[0]])), "unit",
                        (float(res_xi), float(res_eta)))


def solve_tangent(model, orbit, complement: EigSequences | None = None) -> np.ndarray:
    """Parameter derivative of the orbit from the linearized cyclic system.

    With ``complement`` the orbit may be critical: the solution is taken in the
    complement of the kernel, i.e. orthogonal to the dual sequence.
    """
    states = orbit.states
    jac = assemble_jacobian(model, orbit)
    rhs = -alpha_column(model, orbit)
    if complement is None:
        sol = _solve(jac, rhs, HyperbolicityViolated)
        return sol.reshape(states.shape)
    size = jac.shape[0]
    w = np.tile(model.rule.weights, states.shape[0])
    big = np.zeros((size + 1, size + 1))
    big[:size, :size] = jac
    big[:size, size] = complement.xi.ravel()
    big[size, :size] = complement.eta.ravel() * w
    sol = _solve(big, np.append(rhs, 0.0), HyperbolicityViolated)
    return sol[:size].reshape(states.shape)


def total_population(orbit, rule=None) -> float:
    rule = rule or orbit.rule
    return float(np.mean(orbit.states @ rule.weights))


def period_map_eigenvalues(model, orbit) -> np.ndarray:
    """Eigenvalues of the explicitly multiplied period map (test oracle only)."""
    blocks = jacobian_blocks(model, orbit.states, orbit.alpha)
    prod = np.eye(blocks[0].shape[0])
    for b in blocks:
        prod = b @ prod
    return np.linalg.eigvals(prod)
