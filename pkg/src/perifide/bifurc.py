"""Bifurcation indicators and classification of critical periodic orbits."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .cyclic import (EigSequences, PeriodicOrbit, alpha_column, assemble_jacobian,
                     block_pairing, cyclic_residual, doubled, eig_sequences, floquet, solve_tangent,
                     _solve)
from .errors import DegenerateUnclassified, InvalidArgument, NotAPitchfork
from .model import RightHandSide

ZERO_REL = 1e-6
B3_TOL = 1e-8


def is_zero(value, scale, rel=ZERO_REL):
    return abs(value) < rel * max(1.0, scale)


@dataclass
class Indicators:
    g01: float | None = None
    g11: float | None = None
    g20: float | None = None
    g30: float | None = None
    g02: float | None = None
    gbar: float | None = None
    scales: dict = field(default_factory=dict)

    def zero(self, name):
        return is_zero(getattr(self, name), self.scales.get(name, 0.0))

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k != "scales"}
        d["scales"] = dict(self.scales)
        return d


def _pair_sum(model, orbit, eig, term):
    """Sum over t of <eta_{t+1}, term(t)> together with the sum of absolute summands."""
    theta = orbit.theta
    w = model.rule.weights
    total, scale = 0.0, 0.0
    for t in range(theta):
        prod = eig.eta[(t + 1) % theta] * term(t) * w
        total += prod.sum()
        scale += np.abs(prod).sum()
    return float(total), float(scale)


def _g01(model, orbit, eig):
    s, a = orbit.states, orbit.alpha
    return _pair_sum(model, orbit, eig, lambda t: model.deriv(t, s[t], a, (0, 1)))


def _g11(model, orbit, eig):
    s, a, xi = orbit.states, orbit.alpha, eig.xi
    return _pair_sum(model, orbit, eig, lambda t: model.deriv(t, s[t], a, (1, 1), xi[t]))


def _g20(model, orbit, eig):
    s, a, xi = orbit.states, orbit.alpha, eig.xi
    return _pair_sum(model, orbit, eig, lambda t: model.deriv(t, s[t], a, (2, 0), xi[t], xi[t]))


def _g30(model, orbit, eig):
    s, a, xi = orbit.states, orbit.alpha, eig.xi
    return _pair_sum(model, orbit, eig,
                     lambda t: model.deriv(t, s[t], a, (3, 0), xi[t], xi[t], xi[t]))


def _g02(model, orbit, eig):
    s, a = orbit.states, orbit.alpha
    return _pair_sum(model, orbit, eig, lambda t: model.deriv(t, s[t], a, (0, 2)))


def indicator_g01(model, orbit, eig):
    return _g01(model, orbit, eig)[0]


def indicator_g11(model, orbit, eig):
    return _g11(model, orbit, eig)[0]


def indicator_g20(model, orbit, eig):
    return _g20(model, orbit, eig)[0]


def indicator_g30(model, orbit, eig):
    return _g30(model, orbit, eig)[0]


def indicator_g02(model, orbit, eig):
    return _g02(model, orbit, eig)[0]


def _bordered(model, orbit, eig, rhs):
    jac = assemble_jacobian(model, orbit)
    size = jac.shape[0]
    w = np.tile(model.rule.weights, orbit.theta)
    big = np.zeros((size + 1, size + 1))
    big[:size, :size] = jac
    big[:size, size] = eig.xi.ravel()
    big[size, :size] = eig.eta.ravel() * w
    return _solve(big, np.append(rhs, 0.0))


def solve_wbar(model, orbit, eig, tol=ZERO_REL):
    """psibar with psibar_{t+1} = D1F_t psibar_t + D1^2F_t xi_t^2 and <eta, psibar> = 0."""
    s, a, xi = orbit.states, orbit.alpha, eig.xi
    src = np.array([model.deriv(t, s[t], a, (2, 0), xi[t], xi[t]) for t in range(orbit.theta)])
    g20, scale = _pair_sum(model, orbit, eig, lambda t: src[t])
    if not is_zero(g20, scale, tol):
        raise NotAPitchfork(f"g20 = {g20:.3e} does not vanish; no pitchfork here")
    rhs = -np.roll(src, 1, axis=0).ravel()
    sol = _bordered(model, orbit, eig, rhs)
    return sol[:-1].reshape(s.shape)


def indicator_gbar(model, orbit, eig, wbar):
    return _gbar_with_scale(model, orbit, eig, wbar)[0]


def _gbar_with_scale(model, orbit, eig, wbar):
    s, a, xi = orbit.states, orbit.alpha, eig.xi
    g30, sc30 = _g30(model, orbit, eig)
    cross, scx = _pair_sum(model, orbit, eig,
                           lambda t: model.deriv(t, s[t], a, (2, 0), xi[t], wbar[t]))
    return g30 + 3 * cross, sc30 + 3 * scx, g30, sc30


# -- period doubling and perturbed motion -------------------------------------------

def flip_embed(model, orbit, tol=1e-6, check=True) -> PeriodicOrbit:
    """The same orbit read with twice its period."""
    if check:
        fl = floquet(model, orbit)
        if not np.any(np.abs(fl.multipliers + 1.0) < tol):
            raise InvalidArgument(f"-1 is not a Floquet multiplier (nearest {fl.critical})")
    return doubled(orbit)


class PerturbedModel(RightHandSide):
    """Model shifted along a known branch so the branch becomes u = 0.

    The branch is approximated by phi + (a - a*) psi + (a - a*)^2 phi2 / 2.
    """

    def __init__(self, base, orbit, psi, phi2=None):
        self.base = base
        self.rule = base.rule
        self.states = np.asarray(orbit.states)
        self.alpha_star = orbit.alpha
        self.psi = np.asarray(psi)
        self.phi2 = np.zeros_like(self.states) if phi2 is None else np.asarray(phi2)
        self.period = orbit.theta

    def branch(self, t, alpha):
        t = t % self.period
        da = alpha - self.alpha_star
        return self.states[t] + da * self.psi[t] + 0.5 * da * da * self.phi2[t]

    def branch_slope(self, t, alpha):
        t = t % self.period
        return self.psi[t] + (alpha - self.alpha_star) * self.phi2[t]

    def rhs(self, t, u, alpha):
        return self.base.rhs(t, np.asarray(u) + self.branch(t, alpha), alpha) \
            - self.branch(t + 1, alpha)

    def d1_matrix(self, t, u, alpha):
        return self.base.d1_matrix(t, np.asarray(u) + self.branch(t, alpha), alpha)

    def dual_d1(self, t, u, alpha, w):
        return self.base.dual_d1(t, np.asarray(u) + self.branch(t, alpha), alpha, w)

    def deriv(self, t, u, alpha, order, *dirs):
        b = self.base
        x = np.asarray(u) + self.branch(t, alpha)
        order = tuple(order)
        if order in ((1, 0), (2, 0), (3, 0)):
            return b.deriv(t, x, alpha, order, *dirs)
        p = self.branch_slope(t, alpha)
        p_next = self.branch_slope(t + 1, alpha)
        if order == (0, 1):
            return b.deriv(t, x, alpha, (0, 1)) + b.deriv(t, x, alpha, (1, 0), p) - p_next
        if order == (1, 1):
            v = dirs[0]
            return b.deriv(t, x, alpha, (1, 1), v) + b.deriv(t, x, alpha, (2, 0), v, p)
        if order == (0, 2):
            tt = t % self.period
            return (b.deriv(t, x, alpha, (0, 2)) + 2 * b.deriv(t, x, alpha, (1, 1), p)
                    + b.deriv(t, x, alpha, (2, 0), p, p)
                    + b.deriv(t, x, alpha, (1, 0), self.phi2[tt])
                    - self.phi2[(tt + 1) % self.period])
        raise InvalidArgument(f"unsupported derivative order {order}")


def second_order_branch(model, orbit, psi):
    """phi2 from the twice-differentiated cyclic identity, least squares near a singular Jacobian."""
    s, a = orbit.states, orbit.alpha
    r = np.array([model.deriv(t, s[t], a, (0, 2)) + 2 * model.deriv(t, s[t], a, (1, 1), psi[t])
                  + model.deriv(t, s[t], a, (2, 0), psi[t], psi[t]) for t in range(orbit.theta)])
    rhs = -np.roll(r, 1, axis=0).ravel()
    jac = assemble_jacobian(model, orbit)
    u, sv, vt = np.linalg.svd(jac)
    keep = sv > 1e-8 * sv[0]
    sol = vt[keep].T @ ((u[:, keep].T @ rhs) / sv[keep])
    return sol.reshape(s.shape)


def perturbed_motion(model, orbit, psi=None, second_order=True) -> PerturbedModel:
    if psi is None:
        psi = solve_tangent(model, orbit)
    phi2 = second_order_branch(model, orbit, psi) if second_order else None
    return PerturbedModel(model, orbit, psi, phi2)


def branch_tangents(model, orbit, eig):
    """Parameter-slopes of the branches through a critical orbit where g01 vanishes.

    Tangents are psi_p + c*xi with c a root of g20 c^2 + 2 b c + d = 0.
    """
    s, a, xi = orbit.states, orbit.alpha, eig.xi
    psi_p = solve_tangent(model, orbit, complement=eig)
    A = _g20(model, orbit, eig)[0]
    B = _pair_sum(model, orbit, eig, lambda t: model.deriv(t, s[t], a, (2, 0), xi[t], psi_p[t])
                  + model.deriv(t, s[t], a, (1, 1), xi[t]))[0]
    C = _pair_sum(model, orbit, eig, lambda t: model.deriv(t, s[t], a, (2, 0), psi_p[t], psi_p[t])
                  + 2 * model.deriv(t, s[t], a, (1, 1), psi_p[t])
                  + model.deriv(t, s[t], a, (0, 2)))[0]
    scale = max(abs(A), abs(B), abs(C), 1e-300)
    if abs(A) < 1e-8 * scale:
        roots = [-C / (2 * B)]
    else:
        disc = B * B - A * C
        if disc < 0:
            disc = 0.0
        roots = [(-B + np.sqrt(disc)) / A, (-B - np.sqrt(disc)) / A]
    return [psi_p + c * xi for c in roots]


def pick_tangent(candidates, direction=None):
    if direction is None:
        return min(candidates, key=lambda p: np.linalg.norm(p))
    z, delta = direction
    z = np.asarray(z).ravel()

    def cosine(p):
        v = np.append(p.ravel(), 1.0)
        ref = np.append(z, delta)
        return abs(v @ ref) / (np.linalg.norm(v) * np.linalg.norm(ref))

    return max(candidates, key=cosine)


# -- classification -----------------------------------------------------------------

@dataclass
class BifurcationPoint:
    orbit: PeriodicOrbit
    alpha: float
    kind: str
    criticality: str | None
    indicators: Indicators
    eig: EigSequences | None = None
    wbar: np.ndarray | None = None
    stability_exchange: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    # model and orbit the eigendata and indicators refer to; differs from the
    # physical model/orbit after flip embedding or a shift to perturbed motion
    analysis_model: object = field(default=None, repr=False)
    analysis_orbit: PeriodicOrbit | None = field(default=None, repr=False)

    def to_dict(self):
        d = {"kind": self.kind, "criticality": self.criticality, "alpha": self.alpha,
             "theta": self.orbit.theta, "indicators": self.indicators.to_dict(),
             "stability_exchange": self.stability_exchange,
             "details": {k: v for k, v in self.details.items() if _jsonable(v)}}
        if self.eig is not None:
            d["eig"] = {"xi_norm": float(np.linalg.norm(self.eig.xi)),
                        "eta_norm": float(np.linalg.norm(self.eig.eta)),
                        "normalization": self.eig.normalization,
                        "residuals": list(self.eig.residuals)}
        if self.wbar is not None:
            d["wbar_norm"] = float(np.linalg.norm(self.wbar))
        return d


def _jsonable(v):
    return isinstance(v, (int, float, str, bool, type(None), list, dict))


def _base_morse(fl, tol=1e-6):
    mults = fl.multipliers
    crit = np.abs(np.abs(mults) - 1) < tol
    return int(np.sum((np.abs(mults) > 1) & ~crit))


def classify(model, orbit, alpha=None, psi=None, direction=None, tol=1e-6) -> BifurcationPoint:
    """Classify a critical orbit whose Floquet spectrum touches the unit circle."""
    if alpha is not None and not np.isclose(alpha, orbit.alpha, rtol=0, atol=1e-14):
        orbit = PeriodicOrbit(orbit.states, alpha, orbit.residual_norm, orbit.rule)
    fl = floquet(model, orbit)
    crit = fl.multipliers[np.argmin(np.abs(np.abs(fl.multipliers) - 1))]
    if abs(crit + 1) < tol:
        return _classify_flip(model, orbit, fl, psi)
    if abs(crit - 1) >= tol:
        return BifurcationPoint(orbit, orbit.alpha, "unclassified", None, Indicators(),
                                details={"multiplier": [float(np.real(crit)), float(np.imag(crit))],
                                         "note": "complex multiplier pair on the unit circle"})
    eig = eig_sequences(model, orbit, 1, tol)
    if model.d2_max(orbit.states, orbit.alpha) >= B3_TOL:
        g01, s01 = _g01(model, orbit, eig)
        if not is_zero(g01, s01):
            return _classify_fold(model, orbit, fl, eig, g01, s01)
        if psi is None:
            psi = pick_tangent(branch_tangents(model, orbit, eig), direction)
        wrapped = perturbed_motion(model, orbit, psi)
        zero = PeriodicOrbit(np.zeros_like(orbit.states), orbit.alpha, 0.0, orbit.rule)
        bp = classify(wrapped, zero, tol=tol)
        bp.orbit = orbit
        bp.details["perturbed_motion"] = True
        return bp
    return _classify_crossing(model, orbit, fl, eig)


def _classify_fold(model, orbit, fl, eig, g01, s01):
    g20, s20 = _g20(model, orbit, eig)
    ind = Indicators(g01=g01, g20=g20, scales={"g01": s01, "g20": s20})
    if is_zero(g20, s20):
        raise DegenerateUnclassified("g01 nonzero but g20 vanishes", ind)
    m0 = _base_morse(fl)
    up = 1 if g20 > 0 else 0
    crit = "sub" if g20 / g01 > 0 else "super"
    exchange = {"xi_negative_side": m0 + (1 - up), "xi_positive_side": m0 + up,
                "rule": "Morse index increases along the branch in the xi direction iff g20 > 0"}
    return BifurcationPoint(orbit, orbit.alpha, "fold", crit, ind, eig, None, exchange,
                            {"alpha_ddot": -g20 / g01}, model, orbit)


def _classify_crossing(model, orbit, fl, eig):
    g11, s11 = _g11(model, orbit, eig)
    g02, s02 = _g02(model, orbit, eig)
    g20, s20 = _g20(model, orbit, eig)
    ind = Indicators(g11=g11, g02=g02, g20=g20, scales={"g11": s11, "g02": s02, "g20": s20})
    if is_zero(g11, s11):
        raise DegenerateUnclassified("g11 vanishes at a crossing point", ind)
    details = {}
    if not is_zero(g02, s02):
        details["conditional"] = True
        details["note"] = f"g02 = {g02:.3e} does not vanish; classification is conditional"
    m0 = _base_morse(fl)
    gain = 1 if g11 > 0 else 0
    exchange = {"primary_below": m0 + (1 - gain), "primary_above": m0 + gain}
    if not is_zero(g20, s20):
        exchange.update({"secondary_xi_negative": m0 + (1 if g20 < 0 else 0),
                         "secondary_xi_positive": m0 + (1 if g20 > 0 else 0)})
        details["secondary_slope"] = -2 * g11 / g20
        details["alpha_dot_secondary"] = -g20 / (2 * g11)
        return BifurcationPoint(orbit, orbit.alpha, "transcritical", None, ind, eig, None,
                                exchange, details, model, orbit)
    wbar = solve_wbar(model, orbit, eig)
    gbar, sbar, g30, s30 = _gbar_with_scale(model, orbit, eig, wbar)
    ind.g30, ind.gbar = g30, gbar
    ind.scales.update({"g30": s30, "gbar": sbar})
    if is_zero(gbar, sbar):
        raise DegenerateUnclassified("g20 and gbar both vanish", ind)
    crit = "sub" if gbar / g11 > 0 else "super"
    exchange["secondary"] = m0 + (1 if gbar > 0 else 0)
    details["alpha_ddot_secondary"] = -gbar / (3 * g11)
    return BifurcationPoint(orbit, orbit.alpha, "pitchfork", crit, ind, eig, wbar, exchange,
                            details, model, orbit)


def _classify_flip(model, orbit, fl, psi):
    if model.d2_max(orbit.states, orbit.alpha) >= B3_TOL:
        wrapped = perturbed_motion(model, orbit, psi)
        base = PeriodicOrbit(np.zeros_like(orbit.states), orbit.alpha, 0.0, orbit.rule)
    else:
        wrapped, base = model, orbit
    doubled = flip_embed(wrapped, base, check=False)
    bp = classify(wrapped, doubled)
    if bp.kind == "pitchfork":
        bp.kind = "flip"
    bp.orbit = orbit
    bp.details["embedded_period"] = doubled.theta
    m0 = _base_morse(fl)
    gain = 1 if bp.indicators.g11 > 0 else 0
    bp.stability_exchange = {"primary_below": m0 + (1 - gain), "primary_above": m0 + gain,
                             "doubled_branch": bp.stability_exchange.get("secondary")}
    return bp


# -- symmetry ------------------------------------------------------------------------

def reflect(rule, u):
    if not rule.is_symmetric:
        raise InvalidArgument("reflection needs a rule symmetric about 0")
    return np.asarray(u)[..., ::-1]


def parity_decompose(rule, u):
    """(odd part, even part) of node values on a symmetric rule.

    Both parts are formed symmetrically, so their reflection identities hold
    bit for bit; the sum reproduces u up to one rounding.
    """
    u = np.asarray(u, dtype=float)
    ur = reflect(rule, u)
    return 0.5 * (u - ur), 0.5 * (u + ur)


def parity(rule, u, tol=1e-8):
    odd, even = parity_decompose(rule, u)
    if np.abs(odd).max() < tol * max(1.0, np.abs(u).max()):
        return "even"
    if np.abs(even).max() < tol * max(1.0, np.abs(u).max()):
        return "odd"
    return "mixed"


# -- eigenvalue curves through a critical point --------------------------------------

def curve_point(model, center: PeriodicOrbit, eig: EigSequences, s, guess, alpha_guess,
                tol=1e-11, max_iter=30):
    """Solve G = 0 together with <eta, phi - phi*>_theta = s."""
    x = np.array(guess, dtype=float)
    a = float(alpha_guess)
    w = model.rule.weights
    shape = center.states.shape
    for _ in range(max_iter):
        orb = PeriodicOrbit(x, a)
        r = cyclic_residual(model, orb).ravel()
        c = block_pairing(model.rule, eig.eta, x - center.states) - s
        if max(np.abs(r).max(), abs(c)) < tol:
            break
        jac = assemble_jacobian(model, orb)
        size = jac.shape[0]
        big = np.zeros((size + 1, size + 1))
        big[:size, :size] = jac
        big[:size, size] = alpha_column(model, orb)
        big[size, :size] = (eig.eta * w[None, :]).ravel()
        step = np.linalg.solve(big, -np.append(r, c))
        x = x + step[:size].reshape(shape)
        a += step[size]
    return PeriodicOrbit(x, a)


def tracked_eigenvalue(model, orbit, target=0.0):
    """Eigenvalue of the cyclic Jacobian closest to ``target``."""
    mu = np.linalg.eigvals(assemble_jacobian(model, orbit))
    return mu[np.argmin(np.abs(mu - target))]


def eigenvalue_curve(bp: BifurcationPoint, s_values):
    """Critical eigenvalue of D1G along the branch through ``bp``, parametrized by <eta, phi - phi*>.

    Folds follow their own branch; transcritical and pitchfork points follow the
    bifurcating one.
    """
    model, center, eig = bp.analysis_model, bp.analysis_orbit, bp.eig
    if bp.kind not in ("fold", "transcritical", "pitchfork"):
        raise InvalidArgument(f"no eigenvalue curve for kind {bp.kind!r}")
    out = []
    for s in s_values:
        x = center.states + s * eig.xi
        a = center.alpha
        if bp.kind == "fold":
            a += 0.5 * bp.details["alpha_ddot"] * s * s
        elif bp.kind == "transcritical":
            a += bp.details["alpha_dot_secondary"] * s
        else:
            x = x + 0.5 * s * s * bp.wbar
            a += 0.5 * bp.details["alpha_ddot_secondary"] * s * s
        pt = curve_point(model, center, eig, s, x, a)
        out.append(tracked_eigenvalue(model, pt).real)
    return np.array(out)
