"""Augmented-Lagrangian solver for equality-constrained NLPs with box bounds.

The outer loop is a method of multipliers on the nonlinear equality
constraints. Each inner problem minimises the augmented Lagrangian over the
box with a primal-dual log-barrier Newton method: the barrier supplies
curvature for variables close to their bounds, which a bang-bang optimum
otherwise lacks, and the exact Hessian of the augmented Lagrangian is
factorised with a banded Cholesky whose failure drives a
Levenberg-Marquardt shift. The barrier parameter is driven to zero along
with the outer iterations. A final minimum-norm Gauss-Newton projection
trims the residual without moving active bounds.

Pinned variables (``lower == upper``) are removed from the iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


@dataclass
class Evaluation:
    """Objective, gradient, constraint values and a ``J^T y`` closure."""

    objective: float
    gradient: np.ndarray
    constraints: np.ndarray
    vjp: Callable[[np.ndarray], np.ndarray]
    hessian_diag: np.ndarray | None = None
    cache: dict = field(default_factory=dict)
    jacobian: sp.spmatrix | None = None


@dataclass
class NlpProblem:
    n: int
    m: int
    evaluate: Callable[..., Evaluation]
    jacobian: Callable[[np.ndarray], sp.spmatrix]
    lower: np.ndarray
    upper: np.ndarray
    x0: np.ndarray
    pin_index: np.ndarray
    pin_value: np.ndarray
    x_scale: np.ndarray
    c_scale: np.ndarray
    f_scale: float = 1.0
    constraint_hessian: Callable | None = None
    # Permutation putting the Hessian in banded form; the last ``n_border``
    # entries are dense coupling variables eliminated by a Schur complement.
    band_order: np.ndarray | None = None
    n_border: int = 0


@dataclass(frozen=True)
class SolverOptions:
    constraint_tol: float = 1e-8
    optimality_tol: float = 1e-6
    max_outer: int = 30
    max_inner: int = 200
    max_total_inner: int = 3000
    rho_init: float = 1e2
    rho_growth: float = 10.0
    rho_max: float = 1e12
    mu_init: float = 1e-2
    mu_min: float = 1e-9
    polish: bool = True


@dataclass
class NlpSolution:
    x: np.ndarray
    objective: float
    converged: bool
    status: str
    outer_iterations: int
    inner_iterations: int
    max_defect: float
    bound_violation: float
    boundary_residual: float
    multipliers: np.ndarray


_TAU = 0.995       # fraction-to-boundary factor
_KAPPA_Z = 1e10    # bound on the dual drift away from mu / s


def _bound_violation(x, lo, hi) -> float:
    return float(max(np.max(lo - x, initial=0.0), np.max(x - hi, initial=0.0)))


def _projected_step(w, g, lo, hi):
    return np.clip(w - g, lo, hi) - w


def _max_step(v, dv, tau=_TAU):
    """Largest ``a <= 1`` keeping ``v + a dv >= (1 - tau) v`` for positive ``v``."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def _interior_start(w, lo, hi):
    """Push a point strictly inside the finite bounds."""
    w = w.copy()
    width = hi - lo
    push_lo = np.where(np.isfinite(lo), np.minimum(1e-2 * np.maximum(1.0, np.abs(lo)), 1e-2 * width), 0)
    push_hi = np.where(np.isfinite(hi), np.minimum(1e-2 * np.maximum(1.0, np.abs(hi)), 1e-2 * width), 0)
    with np.errstate(invalid="ignore"):
        w = np.where(np.isfinite(lo), np.maximum(w, lo + push_lo), w)
        w = np.where(np.isfinite(hi), np.minimum(w, hi - push_hi), w)
    return w


class _Barrier:
    """Log-barrier bookkeeping for the free variables."""

    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi
        self.has_lo = np.isfinite(lo)
        self.has_hi = np.isfinite(hi)

    def slacks(self, w):
        s_lo = np.where(self.has_lo, w - np.where(self.has_lo, self.lo, 0.0), 1.0)
        s_hi = np.where(self.has_hi, np.where(self.has_hi, self.hi, 0.0) - w, 1.0)
        return s_lo, s_hi

    def value(self, w, mu):
        s_lo, s_hi = self.slacks(w)
        if np.any(s_lo <= 0) or np.any(s_hi <= 0):
            return np.inf
        return -mu * (np.sum(np.log(s_lo[self.has_lo])) + np.sum(np.log(s_hi[self.has_hi])))

    def gradient(self, w, mu):
        s_lo, s_hi = self.slacks(w)
        return -mu * self.has_lo / s_lo + mu * self.has_hi / s_hi


def _inner(merit, w, z_lo, z_hi, lam, rho, mu, free, barrier, tol, max_iter, shift0):
    """Barrier Newton minimisation of the augmented Lagrangian for fixed ``mu``.

    ``w`` is the full scaled vector; only entries in ``free`` move.
    """
    p = merit.p
    fidx = np.nonzero(free)[0]
    if p.band_order is not None:
        pos = np.full(p.n, -1)
        pos[fidx] = np.arange(fidx.size)
        order = pos[p.band_order]
        n_border = int(np.count_nonzero(order[len(order) - p.n_border:] >= 0)) if p.n_border else 0
        order = order[order >= 0]
    else:
        order, n_border = None, 0
    shift = shift0
    n_it = 0
    val, g, H, c = merit.full(w, lam, rho)
    phi = val + barrier.value(w[fidx], mu)
    err = np.inf
    for n_it in range(1, max_iter + 1):
        wf = w[fidx]
        s_lo, s_hi = barrier.slacks(wf)
        gf = g[fidx]
        dual = gf - z_lo + z_hi
        comp = np.maximum(np.abs(s_lo * z_lo - mu) * barrier.has_lo, np.abs(s_hi * z_hi - mu) * barrier.has_hi)
        err = float(max(np.max(np.abs(dual), initial=0.0), np.max(comp, initial=0.0)))
        if err <= tol:
            break
        sigma = barrier.has_lo * z_lo / s_lo + barrier.has_hi * z_hi / s_hi
        gphi = gf + barrier.gradient(wf, mu)
        Hf = (H[fidx][:, fidx] + sp.diags(sigma)).tocsr()
        scale = max(float(np.mean(np.abs(Hf.diagonal()))), 1e-12)
        floor = 1e-12 * scale
        shift = min(max(shift, floor), 1e-2 * scale)
        accepted = False
        for _attempt in range(60):
            d = _factor_solve(Hf, gphi, order, n_border, shift)
            if d is not None:
                a_max = min(_max_step(s_lo[barrier.has_lo], d[barrier.has_lo]),
                            _max_step(s_hi[barrier.has_hi], -d[barrier.has_hi]))
                step = a_max * d
                pred = -(gphi @ step + 0.5 * step @ (Hf @ step))
                if pred > 0:
                    w_new = w.copy()
                    w_new[fidx] = wf + step
                    trial = merit.value(w_new, lam, rho) + barrier.value(w_new[fidx], mu)
                    ratio = (phi - trial) / pred
                    if np.isfinite(trial) and (ratio > 1e-4 or (phi - trial) >= 0 and pred < 1e-14 * (1 + abs(phi))):
                        accepted = True
                        if ratio > 0.75:
                            shift = max(shift / 4.0, floor)
                        elif ratio < 0.25:
                            shift *= 4.0
                        break
            shift = max(8.0 * shift, 1e-8 * scale)
            if shift > 1e12 * scale:
                break
        if not accepted:
            break
        # dual step, then keep z within a band around mu / s
        dz_lo = np.where(barrier.has_lo, mu / s_lo - z_lo - sigma_part(z_lo, s_lo) * step, 0.0)
        dz_hi = np.where(barrier.has_hi, mu / s_hi - z_hi + sigma_part(z_hi, s_hi) * step, 0.0)
        a_z = min(_max_step(z_lo[barrier.has_lo], dz_lo[barrier.has_lo]),
                  _max_step(z_hi[barrier.has_hi], dz_hi[barrier.has_hi]))
        w = w_new
        s_lo, s_hi = barrier.slacks(w[fidx])
        z_lo = _clamp_dual(z_lo + a_z * dz_lo, s_lo, mu, barrier.has_lo)
        z_hi = _clamp_dual(z_hi + a_z * dz_hi, s_hi, mu, barrier.has_hi)
        val, g, H, c = merit.full(w, lam, rho)
        phi = val + barrier.value(w[fidx], mu)
    return w, z_lo, z_hi, n_it, err, shift


def sigma_part(z, s):
    return z / s


def _clamp_dual(z, s, mu, mask):
    z = np.clip(z, mu / (_KAPPA_Z * s), _KAPPA_Z * mu / s)
    return np.where(mask, z, 0.0)


def solve(problem: NlpProblem, options: SolverOptions = SolverOptions()) -> NlpSolution:
    """Solve ``min f(x) s.t. c(x) = 0, lower <= x <= upper``.

    Deterministic: identical inputs give identical iterates.
    """
    xs = problem.x_scale
    cs = problem.c_scale
    lo = problem.lower / xs
    hi = problem.upper / xs
    lo[problem.pin_index] = problem.pin_value / xs[problem.pin_index]
    hi[problem.pin_index] = problem.pin_value / xs[problem.pin_index]
    if np.any(lo > hi):
        raise ValueError("inconsistent bounds")
    pinned = np.zeros(problem.n, dtype=bool)
    pinned[problem.pin_index] = True
    pinned |= lo == hi
    free = ~pinned
    w = np.clip(problem.x0 / xs, lo, hi)
    w[pinned] = lo[pinned]
    w[free] = _interior_start(w[free], lo[free], hi[free])
    barrier = _Barrier(lo[free], hi[free])
    mu = options.mu_init
    s_lo, s_hi = barrier.slacks(w[free])
    z_lo = _clamp_dual(mu / s_lo, s_lo, mu, barrier.has_lo)
    z_hi = _clamp_dual(mu / s_hi, s_hi, mu, barrier.has_hi)
    lam = np.zeros(problem.m)
    rho = options.rho_init
    merit = _ScaledMerit(problem)

    eta = 1.0 / rho**0.1
    omega = 1.0 / rho
    shift = 0.0
    inner_total = 0
    converged = False
    status = "max outer iterations"
    outer = 0
    for outer in range(1, options.max_outer + 1):
        tol = max(omega, 10.0 * mu, 0.1 * options.optimality_tol)
        budget = min(options.max_inner, options.max_total_inner - inner_total)
        w, z_lo, z_hi, nit, err, shift = _inner(
            merit, w, z_lo, z_hi, lam, rho, mu, free, barrier, tol, budget, shift)
        inner_total += nit
        ev = problem.evaluate(w * xs)
        c = ev.constraints / cs
        viol = float(np.max(np.abs(ev.constraints), initial=0.0))
        if np.max(np.abs(c), initial=0.0) <= eta:
            lam = lam + rho * c
            eta = max(eta / rho**0.9, 1e-15)
            omega = max(omega / rho, 0.1 * options.optimality_tol)
        else:
            rho = min(rho * options.rho_growth, options.rho_max)
            eta = 1.0 / rho**0.1
            omega = 1.0 / rho
        g_lag = ((merit.fs * ev.gradient + ev.vjp(lam / cs)) * xs)[free]
        opt = float(np.max(np.abs(g_lag - z_lo + z_hi), initial=0.0))
        log.debug("outer %d: viol=%.3e opt=%.3e mu=%.1e rho=%.1e inner=%d err=%.2e",
                  outer, viol, opt, mu, rho, nit, err)
        if viol <= options.constraint_tol and opt <= options.optimality_tol and mu <= options.mu_min:
            converged = True
            status = "converged"
            break
        if inner_total >= options.max_total_inner:
            status = "inner iteration budget exhausted"
            break
        if err <= tol:
            mu_new = max(options.mu_min, 0.1 * mu)
            if mu_new < mu:
                ratio = mu_new / mu
                z_lo, z_hi = z_lo * ratio, z_hi * ratio
                s_lo, s_hi = barrier.slacks(w[free])
                z_lo = _clamp_dual(z_lo, s_lo, mu_new, barrier.has_lo)
                z_hi = _clamp_dual(z_hi, s_hi, mu_new, barrier.has_hi)
                mu = mu_new

    x = np.clip(w * xs, problem.lower, problem.upper)
    x[problem.pin_index] = problem.pin_value
    # snap variables that sit on a bound up to barrier precision
    tight = 10.0 * options.mu_min * xs
    x = np.where(x - problem.lower < tight, problem.lower, x)
    x = np.where(problem.upper - x < tight, problem.upper, x)
    if options.polish:
        x = _polish(problem, x)
        x = _try_active_set(problem, x, 100.0 * np.sqrt(options.mu_min) * xs, options.constraint_tol)
    ev = problem.evaluate(x)
    max_defect = float(np.max(np.abs(ev.constraints), initial=0.0))
    pins = float(np.max(np.abs(x[problem.pin_index] - problem.pin_value), initial=0.0))
    if converged and max_defect > 10 * options.constraint_tol:
        converged = False
        status = "constraint residual grew after termination"
    return NlpSolution(
        x=x, objective=float(ev.objective), converged=converged, status=status,
        outer_iterations=outer, inner_iterations=inner_total, max_defect=max_defect,
        bound_violation=_bound_violation(x, problem.lower, problem.upper),
        boundary_residual=pins, multipliers=lam,
    )


class _ScaledMerit:
    """Augmented Lagrangian in scaled variables ``w = x / x_scale``."""

    def __init__(self, problem: NlpProblem):
        self.p = problem
        self.xs = problem.x_scale
        self.cs = problem.c_scale
        self.fs = problem.f_scale
        self.n_evals = 0

    def value(self, w, lam, rho):
        self.n_evals += 1
        ev = self.p.evaluate(w * self.xs)
        c = ev.constraints / self.cs
        return self.fs * ev.objective + lam @ c + 0.5 * rho * (c @ c)

    def full(self, w, lam, rho):
        ev = self.p.evaluate(w * self.xs, with_jacobian=True)
        c = ev.constraints / self.cs
        y = lam + rho * c
        val = self.fs * ev.objective + lam @ c + 0.5 * rho * (c @ c)
        g = (self.fs * ev.gradient + ev.vjp(y / self.cs)) * self.xs
        Js = sp.diags(1.0 / self.cs) @ ev.jacobian @ sp.diags(self.xs)
        H = rho * (Js.T @ Js)
        if self.p.constraint_hessian is not None:
            Dx = sp.diags(self.xs)
            H = H + Dx @ self.p.constraint_hessian(w * self.xs, y / self.cs) @ Dx
        if ev.hessian_diag is not None:
            H = H + sp.diags(self.fs * ev.hessian_diag * self.xs**2)
        return val, g, H.tocsr(), c


def _factor_solve(H, g, order, n_border, shift):
    """Solve ``(H + shift I) d = -g`` if the shifted matrix is positive definite.

    Returns ``None`` when a Cholesky factorisation fails, which doubles as an
    inertia test.
    """
    n = len(g)
    if order is None:
        M = H.toarray() + shift * np.eye(n)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return None
        return -scipy.linalg.cho_solve((L, True), g)
    Hp = H[order][:, order].tocoo()
    gp = g[order]
    nm = n - n_border
    main = (Hp.row < nm) & (Hp.col < nm) & (Hp.col >= Hp.row)
    r, c, v = Hp.row[main], Hp.col[main], Hp.data[main]
    bw = int(np.max(c - r, initial=0))
    ab = np.zeros((bw + 1, nm))
    np.add.at(ab, (bw + r - c, c), v)
    ab[bw] += shift
    try:
        cb = scipy.linalg.cholesky_banded(ab, lower=False, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    dp = np.empty(n)
    if n_border:
        Hc = Hp.tocsc()
        hb = Hc[:nm, nm:].toarray()
        hbb = Hc[nm:, nm:].toarray() + shift * np.eye(n_border)
        Z = scipy.linalg.cho_solve_banded((cb, False), hb, check_finite=False)
        zg = scipy.linalg.cho_solve_banded((cb, False), gp[:nm], check_finite=False)
        S = hbb - hb.T @ Z
        try:
            Ls = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None
        db = -scipy.linalg.cho_solve((Ls, True), gp[nm:] - hb.T @ zg)
        dp[nm:] = db
        dp[:nm] = -(zg + Z @ db)
    else:
        dp = -scipy.linalg.cho_solve_banded((cb, False), gp, check_finite=False)
    d = np.empty(n)
    d[order] = dp
    return d


def _try_active_set(problem: NlpProblem, x, band, tol):
    """Snap variables within ``band`` of a bound, re-project, keep if no worse.

    Degenerate bounds (zero objective gradient at the bound) leave the barrier
    iterate O(sqrt(mu)) away from them; this recovers the exact vertex.
    """
    lo, hi = problem.lower, problem.upper
    near_lo = x - lo < band
    near_hi = hi - x < band
    if not (np.any(near_lo) or np.any(near_hi)):
        return x
    cand = np.where(near_lo, lo, np.where(near_hi, hi, x))
    cand[problem.pin_index] = problem.pin_value
    cand = _polish(problem, cand)
    ev0 = problem.evaluate(x)
    ev1 = problem.evaluate(cand)
    d0 = float(np.max(np.abs(ev0.constraints), initial=0.0))
    d1 = float(np.max(np.abs(ev1.constraints), initial=0.0))
    if d1 <= max(tol, d0) and ev1.objective <= ev0.objective:
        return cand
    return x


def _polish(problem: NlpProblem, x, iterations: int = 6, target: float = 1e-13):
    """Minimum-norm Gauss-Newton steps onto ``c(x) = 0`` over inactive variables."""
    lo, hi = problem.lower, problem.upper
    xs = problem.x_scale
    fixed = np.zeros(problem.n, dtype=bool)
    fixed[problem.pin_index] = True
    for _ in range(iterations):
        ev = problem.evaluate(x, with_jacobian=True)
        c = ev.constraints
        cmax = float(np.max(np.abs(c), initial=0.0))
        if cmax <= target:
            break
        with np.errstate(invalid="ignore"):
            active = fixed | (x <= lo + 1e-9 * xs) | (x >= hi - 1e-9 * xs)
        Js = ev.jacobian @ sp.diags(xs * (~active))
        M = (Js @ Js.T + sp.identity(problem.m) * 1e-14).tocsc()
        try:
            y = spla.spsolve(M, c)
        except RuntimeError:
            break
        if not np.all(np.isfinite(y)):
            break
        x_new = np.clip(x - (Js.T @ y) * xs, lo, hi)
        if np.max(np.abs(problem.evaluate(x_new).constraints)) >= cmax:
            break
        x = x_new
    return x
