"""Variational equilibrium of the followers' game at a fixed leader decision.

The equilibrium is the solution of the variational inequality driven by the
stacked own-block payoff gradients D over the joint feasible polytope. The
solver runs projected gradient ascent steps x <- proj(x + rho * D) and, at a
configurable cadence, attempts an exact active-set refinement: it solves the
equilibrium KKT system on the currently active rows and accepts the candidate
only if it is feasible, dual-sign correct, and a fixed point of the projected
step to within the stop tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (ConvergenceError, GameConfigError, KKTError,
                     UnboundedProblemError)
from .game import assemble_gradient_field, joint_polytope, lipschitz_estimate
from .polytopes import ProjectionState, linear_minimize, project


@dataclass
class VEConfig:
    rho: Optional[float] = None  # None -> 0.05 / (Lipschitz estimate of D)
    stop_tol: float = 1e-8
    k_max: int = 50_000
    polish: bool = True
    polish_every: int = 100
    project_tol: float = 1e-9

    def __post_init__(self):
        if self.rho is not None and self.rho <= 0:
            raise GameConfigError("step size must be positive")
        if self.stop_tol <= 0 or self.project_tol <= 0:
            raise GameConfigError("tolerances must be positive")
        if self.k_max <= 0 or self.polish_every <= 0:
            raise GameConfigError("iteration limits must be positive")


@dataclass
class VEResult:
    x_star: np.ndarray
    iterations: int
    converged: bool
    final_step_norm: float
    rho: float
    polished: bool = False


def _default_rho(field, y, x0):
    L = lipschitz_estimate(field, y, x0)
    if L <= 1e-12:
        return 1.0
    return 0.05 / L


def _kkt_solve(J, G, g, E, f, act, cur, d_cur):
    """One saddle solve on the active rows; (x, lam, nu) or None.

    Solved in correction form around ``cur`` so that a rank-deficient
    system yields the smallest step, not the smallest absolute point.
    """
    n = J.shape[0]
    a, m_e = act.size, E.shape[0]
    size = n + a + m_e
    rhs = np.concatenate([-d_cur,
                          g[act] - (G[act] @ cur if a else np.zeros(0)),
                          f - (E @ cur if m_e else np.zeros(0))])
    if size > 600:
        Js = sp.csr_matrix(J)
        Gs = sp.csr_matrix(G[act]) if a else sp.csr_matrix((0, n))
        Es = sp.csr_matrix(E) if m_e else sp.csr_matrix((0, n))
        top = sp.hstack([Js, -Gs.T, -Es.T], format="csr")
        mid = sp.hstack([Gs, sp.csr_matrix((a, a + m_e))], format="csr")
        bot = sp.hstack([Es, sp.csr_matrix((m_e, a + m_e))], format="csr")
        K = sp.vstack([top, mid, bot], format="csc")
        try:
            sol = splu(K).solve(rhs)
        except RuntimeError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        resid = float(np.abs(K @ sol - rhs).max(initial=0.0))
    else:
        K = np.zeros((size, size))
        K[:n, :n] = J
        if a:
            K[:n, n:n + a] = -G[act].T
            K[n:n + a, :n] = G[act]
        if m_e:
            K[:n, n + a:] = -E.T
            K[n + a:, :n] = E
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        resid = float(np.abs(K @ sol - rhs).max(initial=0.0))
    if resid > 1e-6 * (1.0 + float(np.abs(rhs).max(initial=0.0))):
        return None
    return cur + sol[:n], sol[n:n + a], sol[n + a:]


def _kkt_refine(poly, D_fn, J, x, act_tol, feas_tol, max_updates=12):
    """Active-set Newton on the equilibrium KKT system; None on failure.

    Seeds the working set from the rows active at x, then repairs it:
    rows with negative multipliers leave, rows the candidate violates
    enter. Terminates exactly once the set settles (a single repair pass
    when the payoff gradients are affine in x).
    """
    G, g = poly._ineq_rows()
    E, f = poly.E, poly.f
    slack = G @ x - g if G.shape[0] else np.zeros(0)
    act = np.flatnonzero(slack > -act_tol)
    cur = x
    for _ in range(max_updates):
        hit = _kkt_solve(J, G, g, E, f, act, cur, D_fn(cur))
        if hit is None:
            return None
        x_new, lam, _ = hit
        bad = np.flatnonzero(lam < -1e-9)
        slack_new = G @ x_new - g if G.shape[0] else np.zeros(0)
        enter = np.setdiff1d(np.flatnonzero(slack_new > feas_tol), act)
        if bad.size == 0 and enter.size == 0:
            return x_new
        keep = np.ones(act.size, dtype=bool)
        keep[bad] = False
        act = np.union1d(act[keep], enter)
        cur = x_new
    return None


def solve_ve(spec, y, x0=None, config=None, poly=None):
    """Solve for the followers' variational equilibrium at leader decision y.

    Returns a VEResult whose x_star satisfies the projected fixed-point test
    to within config.stop_tol. Raises ConvergenceError past config.k_max.
    """
    config = config or VEConfig()
    poly = joint_polytope(spec, y) if poly is None else poly
    field = assemble_gradient_field(spec)
    x = project(poly, np.zeros(spec.n)) if x0 is None else \
        np.asarray(x0, dtype=float).copy()
    if poly.max_violation(x) > 1e-9:
        x = project(poly, x, config.project_tol)
    rho = config.rho if config.rho is not None else _default_rho(field, y, x)
    J = None
    pstate = ProjectionState()
    step = np.inf

    def D_at(pt):
        d = field.evaluate(y, pt)
        if not np.all(np.isfinite(d)):
            raise ConvergenceError("gradient field returned non-finite values",
                                   result=VEResult(pt, k, False, float("nan"), rho))
        return d

    def try_polish(pt):
        nonlocal J
        if J is None:
            J = field.jacobian_x(y, pt)
        cand = _kkt_refine(poly, D_at, J, pt, act_tol=1e-6, feas_tol=1e-8)
        if cand is None:
            return None
        fixed = project(poly, cand + rho * D_at(cand), config.project_tol,
                        warm=pstate)
        gap = float(np.linalg.norm(fixed - cand))
        if gap <= config.stop_tol:
            return cand, gap
        return None

    k = 0
    interval = config.polish_every
    next_try = interval
    for k in range(1, config.k_max + 1):
        x_new = project(poly, x + rho * D_at(x), config.project_tol, warm=pstate)
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step < config.stop_tol:
            if config.polish:
                hit = try_polish(x)
                if hit is not None:
                    return VEResult(hit[0], k, True, hit[1], rho, polished=True)
            return VEResult(x, k, True, step, rho)
        if config.polish and k >= next_try:
            hit = try_polish(x)
            if hit is not None:
                return VEResult(hit[0], k, True, hit[1], rho, polished=True)
            interval = min(interval * 2, 8 * config.polish_every)
            next_try = k + interval
    raise ConvergenceError(
        f"no equilibrium within {config.k_max} iterations (last step {step:.3e})",
        result=VEResult(x, config.k_max, False, step, rho))


def recover_z(spec, y, x_star, poly=None):
    """Duplicate decision used by the lifted formulation; equals x_star.

    Before returning, certifies the variational inequality by solving the
    inner linear program: the payoff-gradient direction must not admit a
    feasible point beating x_star by more than 1e-6.
    """
    x_star = np.asarray(x_star, dtype=float)
    poly = joint_polytope(spec, y) if poly is None else poly
    field = assemble_gradient_field(spec)
    D = field.evaluate(y, x_star)
    try:
        z_best = linear_minimize(poly, -D)
    except UnboundedProblemError as exc:
        raise KKTError("inner linear program unbounded: x_star is not a "
                       "variational equilibrium") from exc
    gap = float(D @ (x_star - z_best))
    if gap < -1e-6:
        raise KKTError(f"variational inequality violated by {-gap:.3e}",
                       residual=-gap)
    return x_star.copy()
