"""Bound-constrained exact-penalty BFGS with feasibility steering.

Minimises ``f(x)`` subject to ``c(x) <= 0`` and ``lb <= x <= ub`` through the penalty
``phi(x) = mu f(x) + sum(max(c(x), 0))``.  Each iteration

1. builds the quasi-Newton direction of ``phi`` restricted to the free variables,
2. steers: while the direction's predicted (linearised) violation reduction is below
   ``steer_cv`` times that of the pure-feasibility direction, ``mu`` is shrunk,
3. backtracks along the projected path until an Armijo decrease of ``phi``,
4. updates the inverse Hessian with Powell damping so it stays positive definite.

The method tolerates the kinks of ``max``-type objectives in the sense that BFGS
quasi-Newton on nonsmooth penalties does in practice; no smoothing is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FunFn = Callable[[np.ndarray], tuple[float, np.ndarray]]
JacFn = Callable[[np.ndarray, float, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SolverOptions:
    """Solver settings.

    ``mu0``, ``opt_tol``, ``step_tol`` and ``viol_tol`` carry the usual penalty-SQP
    meaning; ``ftol`` with ``stall_iters`` ends runs whose penalty stopped improving.
    """

    mu0: float = 5.5
    opt_tol: float = 1e-8
    step_tol: float = 1e-12
    viol_tol: float = 0.0
    ftol: float = 1e-10
    stall_iters: int = 5
    max_iter: int = 150
    armijo: float = 1e-4
    max_backtracks: int = 30
    steer_cv: float = 0.1
    steer_shrink: float = 0.5
    max_steer: int = 8
    mu_min: float = 1e-10

    def __post_init__(self):
        if self.mu0 <= 0 or self.max_iter < 1 or not 0 < self.steer_shrink < 1:
            raise ValueError("invalid solver options")


@dataclass
class SolverResult:
    x: np.ndarray
    f: float
    c: np.ndarray
    feasible: bool
    status: str
    iterations: int
    mu: float
    history: list[dict] = field(default_factory=list)


def violation(c: np.ndarray) -> float:
    return float(np.sum(np.maximum(c, 0.0)))


def _penalty_grad(mu, gf, c, Jc):
    g = mu * gf
    if c.size:
        g = g + Jc[c > 0].sum(axis=0)
    return g


def _free_mask(x, g, lb, ub):
    at_lb = (x <= lb) & (g > 0)
    at_ub = (x >= ub) & (g < 0)
    return ~(at_lb | at_ub)


def _direction(H, g, free):
    d = np.zeros_like(g)
    if free.any():
        d[free] = -H[np.ix_(free, free)] @ g[free]
    return d


def _lin_violation(c, Jc, d):
    return violation(c + Jc @ d) if c.size else 0.0


def _bfgs_update(H, s, y):
    """Powell-damped inverse BFGS update (keeps ``H`` positive definite)."""
    Hy = H @ y
    sy = float(s @ y)
    yHy = float(y @ Hy)
    if yHy <= 0 or not np.isfinite(sy):
        return H
    # damping in the inverse form: blend y toward H^{-1} s direction via s
    if sy < 0.2 * yHy:
        theta = 0.8 * yHy / (yHy - sy)
        s = theta * s + (1 - theta) * Hy
        sy = float(s @ y)
        if sy <= 0:
            return H
    rho = 1.0 / sy
    V = np.eye(len(s)) - rho * np.outer(s, y)
    return V @ H @ V.T + rho * np.outer(s, s)


def minimize(fun: FunFn, jac: JacFn, x0, lb, ub, options: SolverOptions | None = None) -> SolverResult:
    """Run the penalty BFGS from ``x0``.

    ``fun(x)`` returns ``(f, c)`` and may return ``f = inf`` to mark an unusable point.
    ``jac(x, f, c)`` returns ``(grad f, Jacobian of c)``; it is only called at
    accepted iterates.  Returns the best feasible iterate seen (else the last one).
    """
    opt = options or SolverOptions()
    lb, ub = np.asarray(lb, float), np.asarray(ub, float)
    x = np.clip(np.asarray(x0, float), lb, ub)
    f, c = fun(x)
    if not np.isfinite(f):
        return SolverResult(x, f, c, False, "start point not evaluable", 0, opt.mu0)
    mu = opt.mu0
    n = x.size
    H = np.eye(n)
    gf, Jc = jac(x, f, c)
    history = []
    best = None
    stall, status, it = 0, "max iterations", 0

    def record(x, f, c):
        nonlocal best
        if violation(c) <= opt.viol_tol and (best is None or f < best[1]):
            best = (x.copy(), f, c.copy())

    record(x, f, c)
    for it in range(1, opt.max_iter + 1):
        v = violation(c)
        g = _penalty_grad(mu, gf, c, Jc)
        free = _free_mask(x, g, lb, ub)
        d = _direction(H, g, free)
        if v > opt.viol_tol and c.size:
            gv = _penalty_grad(0.0, gf, c, Jc)
            d_feas = _direction(H, gv, _free_mask(x, gv, lb, ub))
            target = v - _lin_violation(c, Jc, d_feas)
            for _ in range(opt.max_steer):
                if v - _lin_violation(c, Jc, d) >= opt.steer_cv * target or mu <= opt.mu_min:
                    break
                mu = max(mu * opt.steer_shrink, opt.mu_min)
                g = _penalty_grad(mu, gf, c, Jc)
                free = _free_mask(x, g, lb, ub)
                d = _direction(H, g, free)
        pg = np.where(free, g, 0.0)
        if np.max(np.abs(pg)) <= opt.opt_tol and v <= opt.viol_tol:
            status = "stationary"
            break
        slope = float(g @ d)
        if slope >= 0:
            H = np.eye(n)
            d = _direction(H, g, free)
            slope = float(g @ d)
            if slope >= 0:
                status = "no descent direction"
                break
        phi = mu * f + v
        t, accepted = 1.0, False
        for _ in range(opt.max_backtracks):
            xt = np.clip(x + t * d, lb, ub)
            s = xt - x
            if np.max(np.abs(s)) <= opt.step_tol:
                break
            ft, ct = fun(xt)
            if np.isfinite(ft):
                phit = mu * ft + violation(ct)
                if phit <= phi + opt.armijo * min(float(g @ s), 0.0):
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            status = "line search failed" if np.max(np.abs(t * d)) > opt.step_tol else "step below tolerance"
            break
        gft, Jct = jac(xt, ft, ct)
        y = _penalty_grad(mu, gft, ct, Jct) - _penalty_grad(mu, gf, ct, Jc)
        H = _bfgs_update(H, s, y)
        stall = stall + 1 if abs(phi - phit) <= opt.ftol * (1.0 + abs(phi)) else 0
        x, f, c, gf, Jc = xt, ft, ct, gft, Jct
        record(x, f, c)
        history.append({"iter": it, "f": f, "viol": violation(c), "mu": mu, "step": t})
        if stall >= opt.stall_iters:
            status = "stalled"
            break
    if best is not None:
        bx, bf, bc = best
        return SolverResult(bx, bf, bc, True, status, it, mu, history)
    return SolverResult(x, f, c, False, status, it, mu, history)
