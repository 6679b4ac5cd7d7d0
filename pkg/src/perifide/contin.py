"""Pseudo-arclength continuation of periodic orbits with event detection.

Tangents live in a scaled space where the stacked state is multiplied by
1/sqrt(theta*N), so the default step measures a root-mean-square change of
the state together with the change of the parameter.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from . import cyclic
from .bifurc import BifurcationPoint, classify, flip_embed
from .cyclic import PeriodicOrbit
from .errors import (DomainError, InvalidArgument, LocalizationFailed, NoConvergence,
                     PerifideError, StartAtSingularity)

NEWTON_TOL = 1e-10


class CyclicProblem:
    """Adapter exposing a model's cyclic operator as F(x, alpha) = 0 on stacked states."""

    def __init__(self, model, theta):
        self.model = model
        self.theta = theta
        self.shape = (theta, model.rule.size)
        self.dim = theta * model.rule.size

    def residual(self, x, alpha):
        return cyclic.cyclic_residual(self.model, x.reshape(self.shape), alpha).ravel()

    def jacobians(self, x, alpha):
        s = x.reshape(self.shape)
        return cyclic.assemble_jacobian(self.model, s, alpha), \
            cyclic.alpha_column(self.model, s, alpha)

    def floquet(self, x, alpha):
        return cyclic.floquet(self.model, PeriodicOrbit(x.reshape(self.shape), alpha))

    def orbit(self, x, alpha, res=0.0):
        return PeriodicOrbit(x.reshape(self.shape), alpha, res, self.model.rule)


class FunctionProblem:
    """Plain nonlinear system F(x, alpha) = 0 with user-supplied derivatives."""

    def __init__(self, residual, jac_x, jac_alpha, dim):
        self._r, self._jx, self._ja = residual, jac_x, jac_alpha
        self.dim = dim
        self.shape = (1, dim)

    def residual(self, x, alpha):
        return np.atleast_1d(self._r(x, alpha)).astype(float)

    def jacobians(self, x, alpha):
        return np.atleast_2d(self._jx(x, alpha)), np.atleast_1d(self._ja(x, alpha))

    def floquet(self, x, alpha):
        return None

    def orbit(self, x, alpha, res=0.0):
        return PeriodicOrbit(x.reshape(self.shape), alpha, res)


@dataclass
class BranchPoint:
    orbit: PeriodicOrbit
    z: np.ndarray
    delta: float
    morse_index: int | None
    leading: np.ndarray
    total_population: float
    s: float
    floquet: object = field(default=None, repr=False)

    @property
    def alpha(self):
        return self.orbit.alpha


@dataclass
class BranchEvent:
    kind: str                      # fold_detected | crossing_detected
    index: tuple
    multiplier: complex | None = None
    point: BifurcationPoint | None = None
    error: str | None = None

    def to_dict(self):
        d = {"kind": self.kind, "index": list(self.index)}
        if self.multiplier is not None:
            d["multiplier"] = [float(np.real(self.multiplier)), float(np.imag(self.multiplier))]
        if self.point is not None:
            d["bifurcation"] = self.point.to_dict()
        if self.error:
            d["error"] = self.error
        return d


@dataclass
class Branch:
    points: list
    events: list
    theta: int
    status: str = "completed"

    def rows(self):
        for p in self.points:
            lead = p.leading[0] if len(p.leading) else np.nan
            yield (p.s, p.alpha, p.morse_index if p.morse_index is not None else -1,
                   p.total_population, float(np.real(lead)), float(np.imag(lead)), p.delta)


def _problem(model_or_problem, theta):
    if isinstance(model_or_problem, (CyclicProblem, FunctionProblem)):
        return model_or_problem
    return CyclicProblem(model_or_problem, theta)


def _lin_solve(a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        return sla.solve(a, b)


def _scale(problem):
    return 1.0 / np.sqrt(problem.dim)


def initial_tangent(model, orbit, direction=1, away_from=None):
    """Unit null vector of [D1G | D2G] in scaled coordinates, oriented by ``direction``.

    With ``away_from`` = (x_ref, alpha_ref) the orientation points away from
    that reference point instead.
    """
    problem = _problem(model, orbit.theta)
    x, alpha = orbit.states.ravel(), orbit.alpha
    jx, ja = problem.jacobians(x, alpha)
    sc = _scale(problem)
    full = np.hstack([jx / sc, ja[:, None]])
    _, sv, vt = np.linalg.svd(full)
    if len(sv) >= full.shape[0] and full.shape[0] >= 1:
        if sv[-1] < 1e-8 * max(sv[0], 1.0):
            raise StartAtSingularity("the null space of [D1G | D2G] is not one-dimensional")
    tang = vt[-1]
    if away_from is not None:
        xr, ar = away_from
        ref = np.append(sc * (x - np.ravel(xr)), alpha - ar)
        if tang @ ref < 0:
            tang = -tang
    elif tang[-1] * direction < 0 or (tang[-1] == 0 and direction < 0):
        tang = -tang
    return tang[:-1], float(tang[-1])


def _next_tangent(problem, x, alpha, z, delta):
    jx, ja = problem.jacobians(x, alpha)
    sc = _scale(problem)
    n = problem.dim
    big = np.zeros((n + 1, n + 1))
    big[:n, :n] = jx / sc
    big[:n, n] = ja
    big[n, :n] = z
    big[n, n] = delta
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    t = _lin_solve(big, rhs)
    t /= np.linalg.norm(t)
    return t[:-1], float(t[-1])


def _correct(problem, x_pred, a_pred, z, delta, tol=NEWTON_TOL, max_iter=12):
    """Newton on G = 0 plus the plane through the predictor normal to the tangent."""
    sc = _scale(problem)
    n = problem.dim
    x, a = x_pred.copy(), float(a_pred)
    for it in range(max_iter + 1):
        r = problem.residual(x, a)
        c = sc * z @ (x - x_pred) + delta * (a - a_pred)
        res = float(np.max(np.abs(r)))
        if res < tol and abs(c) < tol:
            return x, a, it, res
        if it == max_iter:
            break
        jx, ja = problem.jacobians(x, a)
        big = np.zeros((n + 1, n + 1))
        big[:n, :n] = jx
        big[:n, n] = ja
        big[n, :n] = sc * z
        big[n, n] = delta
        step = _lin_solve(big, -np.append(r, c))
        x = x + step[:n]
        a = a + step[n]
        if not np.all(np.isfinite(x)):
            break
    raise NoConvergence("corrector did not converge")


def _make_point(problem, x, a, z, delta, s, res, monitor=True):
    orb = problem.orbit(x, a, res)
    fl = problem.floquet(x, a) if monitor else None
    if fl is None:
        morse, lead = None, np.zeros(0, dtype=complex)
    else:
        morse, lead = fl.morse_index, fl.leading(4)
    pop = cyclic.total_population(orb) if getattr(orb, "rule", None) is not None else float("nan")
    return BranchPoint(orb, z, delta, morse, lead, pop, s, fl)


def _match(prev, cur, count=8):
    """Nearest-neighbour pairing of the leading multipliers of two steps."""
    a = prev.multipliers[np.argsort(-np.abs(prev.multipliers))][:count]
    b = cur.multipliers[np.argsort(-np.abs(cur.multipliers))][:count]
    k = min(len(a), len(b))
    a, b = a[:k], b[:k]
    rows, cols = linear_sum_assignment(np.abs(a[:, None] - b[None, :]))
    return [(a[r], b[c]) for r, c in zip(rows, cols)]


def _crossings(p0: BranchPoint, p1: BranchPoint, margin=1e-9):
    out = []
    for m0, m1 in _match(p0.floquet, p1.floquet):
        d0, d1 = abs(m0) - 1, abs(m1) - 1
        if d0 * d1 < 0 and abs(d0) > margin and abs(d1) > margin:
            if np.imag(m1) < -1e-12:
                continue   # conjugate partner
            out.append((m0, m1))
    return out


def continue_branch(model, start: PeriodicOrbit, h=0.05, k_max=400, alpha_range=None,
                    direction=1, tangent=None, detect=True, localize=True, monitor=True,
                    adapt=True, max_arclength=None, problem=None) -> Branch:
    """Trace a branch from ``start`` and report folds and stability crossings."""
    problem = problem or _problem(model, start.theta)
    h0 = float(h)
    x, a = start.states.ravel().astype(float), start.alpha
    if tangent is None:
        z, delta = initial_tangent(problem if problem is not None else model, start, direction)
    else:
        z, delta = tangent
    points = [_make_point(problem, x, a, z, delta, 0.0, start.residual_norm, monitor)]
    events = []
    sc = _scale(problem)
    status = "completed"
    s = 0.0
    for _ in range(k_max):
        cur = points[-1]
        x0, a0 = cur.orbit.states.ravel(), cur.orbit.alpha
        step = h
        while True:
            try:
                xp, ap = x0 + step * cur.z / sc, a0 + step * cur.delta
                x1, a1, its, res = _correct(problem, xp, ap, cur.z, cur.delta)
                z1, d1 = _next_tangent(problem, x1, a1, cur.z, cur.delta)
                break
            except (NoConvergence, DomainError, sla.LinAlgError, sla.LinAlgWarning,
                    np.linalg.LinAlgError):
                step *= 0.5
                if step < h0 / 64:
                    status = "aborted: corrector failed at minimum step"
                    break
        if status != "completed":
            break
        s += step
        nxt = _make_point(problem, x1, a1, z1, d1, s, res, monitor)
        nxt_index = len(points)
        points.append(nxt)
        if detect:
            events.extend(_detect(problem, model, points[-2], nxt, nxt_index, step, localize))
        if adapt:
            if its <= 3:
                h = min(step * 2, 4 * h0)
            elif its >= 8:
                h = max(step / 2, h0 / 64)
            else:
                h = step
        if alpha_range is not None and not (alpha_range[0] <= a1 <= alpha_range[1]):
            status = "left parameter range"
            break
        if max_arclength is not None and s >= max_arclength:
            status = "arclength limit"
            break
    return Branch(points, events, start.theta, status)


def _detect(problem, model, p0, p1, index, step, localize):
    found = []
    fold = p0.delta * p1.delta < 0
    if fold:
        ev = BranchEvent("fold_detected", (index - 1, index), 1.0)
        if localize:
            _localize_into(problem, model, p0, step, ev)
        found.append(ev)
    if p0.floquet is None or p1.floquet is None:
        return found
    for m0, m1 in _crossings(p0, p1):
        if fold and abs(np.imag(m1)) < 1e-9 and np.real(m1) > 0:
            continue
        ev = BranchEvent("crossing_detected", (index - 1, index), complex(m1))
        if localize and abs(np.imag(m1)) < 1e-6:
            _localize_into(problem, model, p0, step, ev, (m0, m1))
        elif localize:
            ev.error = "complex multiplier pair: crossing unclassified"
        found.append(ev)
    return found


def _localize_into(problem, model, p0, step, ev, pair=None):
    try:
        ev.point = _localize(problem, model, p0, step, ev.kind, pair)
    except (PerifideError, np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
        ev.error = f"{type(exc).__name__}: {exc}"


def _localize(problem, model, p0, h, kind, pair=None, tol=1e-8, max_iter=80):
    sc = _scale(problem)
    x0, a0 = p0.orbit.states.ravel(), p0.orbit.alpha

    def solve_at(sig):
        xp, ap = x0 + sig * p0.z / sc, a0 + sig * p0.delta
        x, a, _, res = _correct(problem, xp, ap, p0.z, p0.delta)
        return x, a, res

    if kind == "fold_detected":
        def test(sig):
            x, a, res = solve_at(sig)
            z, d = _next_tangent(problem, x, a, p0.z, p0.delta)
            return d, (x, a, res, z, d)
    else:
        m0, m1 = pair

        def test(sig):
            x, a, res = solve_at(sig)
            fl = problem.floquet(x, a)
            guess = m0 + (sig / h) * (m1 - m0)
            nu = fl.multipliers[np.argmin(np.abs(fl.multipliers - guess))]
            return abs(nu) - 1.0, (x, a, res, nu)

    lo, hi = 0.0, h
    flo, _ = test(lo)
    fhi, info = test(hi)
    if flo * fhi > 0:
        raise LocalizationFailed("bracket lost before refinement",
                                 {"f_lo": flo, "f_hi": fhi})
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm, info_m = test(mid)
        if abs(fm) < tol:
            info = info_m
            break
        if fm * flo < 0:
            hi, fhi, info = mid, fm, info_m
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-15:
            break
    else:
        raise LocalizationFailed("bisection did not reach the tolerance", {"f": fm})
    x, a, res = info[0], info[1], info[2]
    orbit = problem.orbit(x, a, res)
    if not isinstance(problem, CyclicProblem):
        return BifurcationPoint(orbit, a, "fold" if kind == "fold_detected" else "crossing",
                                None, None)
    zz, dd = (info[3], info[4]) if kind == "fold_detected" else (p0.z, p0.delta)
    direction = (zz / sc, dd)
    bp = classify(problem.model, orbit, direction=direction)
    bp.details["test_function"] = float(test_value(info, kind))
    return bp


def test_value(info, kind):
    if kind == "fold_detected":
        return info[4]
    return abs(info[3]) - 1.0


def localize_event(model, branch: Branch, event: BranchEvent) -> BifurcationPoint:
    """Refine a detected event and classify it."""
    i0, i1 = event.index
    p0, p1 = branch.points[i0], branch.points[i1]
    problem = _problem(model, branch.theta)
    h = p1.s - p0.s
    pair = None
    if event.kind == "crossing_detected":
        cands = _crossings(p0, p1)
        if not cands:
            raise LocalizationFailed("no multiplier crosses the unit circle in this step")
        pair = min(cands, key=lambda c: abs(c[1] - event.multiplier))
    return _localize(problem, model, p0, h, event.kind, pair)


def switch_branch(model, bp: BifurcationPoint, sign=1, eps=None, tol=NEWTON_TOL,
                  max_iter=30) -> PeriodicOrbit:
    """Orbit on the bifurcating branch seeded at phi* + sign*eps*xi."""
    if bp.eig is None:
        raise InvalidArgument("bifurcation point carries no eigendata")
    base = bp.orbit
    if bp.kind == "flip":
        base = flip_embed(model, base, check=False)
    xi = bp.eig.xi
    if xi.shape != base.states.shape:
        raise InvalidArgument("eigendata period does not match the orbit")
    if eps is None:
        eps = 1e-2 * float(np.abs(base.states).max()) + 1e-3
    seed = base.states + sign * eps * xi
    a = bp.alpha
    s = sign * eps
    d = bp.details
    if "alpha_ddot_secondary" in d:
        a += 0.5 * d["alpha_ddot_secondary"] * s * s
    elif "alpha_dot_secondary" in d:
        a += d["alpha_dot_secondary"] * s
    problem = CyclicProblem(model, base.theta)
    n = problem.dim
    x = seed.ravel().copy()
    xv = xi.ravel()
    for _ in range(max_iter):
        r = problem.residual(x, a)
        c = xv @ (x - seed.ravel())
        if max(np.abs(r).max(), abs(c)) < tol:
            return problem.orbit(x, a, float(np.abs(r).max()))
        jx, ja = problem.jacobians(x, a)
        big = np.zeros((n + 1, n + 1))
        big[:n, :n] = jx
        big[:n, n] = ja
        big[n, :n] = xv
        step = np.linalg.solve(big, -np.append(r, c))
        x += step[:n]
        a += step[n]
    raise NoConvergence("branch switching corrector did not converge")
