"""Proximal best-response baseline.

Every round the leader and then each follower (ascending index) best
respond to the current joint decision with a proximal penalty
(tau_t/2)*||change||^2, tau_t decreasing to zero. The hierarchy is
ignored: the leader optimizes against the followers' current decision
instead of their equilibrium response. Used as the comparison baseline;
on hierarchical problems it settles away from the Stackelberg solution.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError
from .game import (block_slices, check_follower_feasible, follower_slice,
                   joint_polytope, leader_polytope)
from .pigd import SolveTrace, TraceRecord, default_leader_start
from .polytopes import project


def _default_tau(t: int) -> float:
    return 1.0 / (1.0 + t)


@dataclass
class ProximalConfig:
    tau_schedule: Callable[[int], float] = _default_tau
    stop_eps: float = 1e-6
    t_max: int = 5000
    inner_tol: float = 1e-9
    inner_max: int = 2000
    trace_every: int = 1

    def __post_init__(self):
        if self.stop_eps <= 0 or self.inner_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.t_max < 1 or self.inner_max < 1 or self.trace_every < 1:
            raise ValueError("iteration limits must be >= 1")


def _prox_ascent(grad, poly, x0, lip, tau, tol, cap):
    """Maximize g(x) - tau/2 ||x - x0||^2 over poly by projected ascent.

    ``grad`` maps the current point to the gradient of g alone. Returns
    (solution, iterations, final step norm).
    """
    step = 1.0 / (tau + lip) if tau + lip > 0 else 1.0
    x = x0.copy()
    for k in range(1, cap + 1):
        g = grad(x) - tau * (x - x0)
        x_new = project(poly, x + step * g)
        delta = float(np.linalg.norm(x_new - x))
        x = x_new
        if delta <= tol:
            return x, k, delta
    return x, cap, delta


def _own_block_lipschitz(spec, y, x):
    """Curvature bound per follower from the own-own Hessian block."""
    out = []
    for i, (fo, sl) in enumerate(zip(spec.followers, block_slices(spec))):
        h = np.asarray(fo.hess_x_own(y, x), dtype=float)[:, sl]
        out.append(float(np.linalg.norm(h, 2)) if h.size else 0.0)
    return out


def solve_proximal(spec, y0=None, x0=None, cfg: Optional[ProximalConfig] = None):
    """Run the baseline; returns (y, follower profile, trace)."""
    cfg = cfg if cfg is not None else ProximalConfig()
    lpoly = leader_polytope(spec)
    y = project(lpoly, np.asarray(y0, dtype=float)
                if y0 is not None else default_leader_start(spec, lpoly))
    poly = joint_polytope(spec, y)
    x = (project(poly, np.zeros(spec.n)) if x0 is None
         else np.asarray(x0, dtype=float).copy())
    check_follower_feasible(spec, y, x)
    sign_l = 1.0 if spec.leader_sense == "max" else -1.0
    sign_f = 1.0 if spec.follower_sense == "max" else -1.0
    slices = block_slices(spec)
    trace = SolveTrace(solver="proximal")
    for t in range(cfg.t_max):
        tic = time.perf_counter()
        tau = float(cfg.tau_schedule(t))
        if tau <= 0:
            raise ValueError(f"tau_schedule({t}) = {tau} must be positive")
        # leader best response to the followers' current decision
        x_frozen = x.copy()

        def leader_grad(yv):
            return sign_l * np.asarray(spec.leader_grad_y(yv, x_frozen),
                                       dtype=float)

        g0 = leader_grad(y)
        probe = y + 1e-4 * (1.0 + np.abs(y))
        lip_y = float(np.linalg.norm(leader_grad(probe) - g0)
                      / np.linalg.norm(probe - y))
        y_new, _, leader_gap = _prox_ascent(leader_grad, lpoly, y, lip_y,
                                            tau, cfg.inner_tol, cfg.inner_max)
        # followers in ascending order, each against the current composite
        poly = joint_polytope(spec, y_new)
        lips = _own_block_lipschitz(spec, y_new, x)
        x_new = x.copy()
        inner_gap = leader_gap
        for i, sl in enumerate(slices):
            sub, _ = follower_slice(spec, y_new, x_new, i, poly)
            fo = spec.followers[i]

            def block_grad(xi, i=i, sl=sl):
                comp = x_new.copy()
                comp[sl] = xi
                return sign_f * np.asarray(fo.grad_own(y_new, comp),
                                           dtype=float)

            xi, _, gap = _prox_ascent(block_grad, sub, x_new[sl].copy(),
                                      lips[i], tau, cfg.inner_tol,
                                      cfg.inner_max)
            x_new[sl] = xi
            inner_gap = max(inner_gap, gap)
        if inner_gap > max(cfg.inner_tol * 10, 1e-6):
            trace.stop_reason = f"inner best response stalled at t={t}"
            trace.iterations = t
            raise ConvergenceError(trace.stop_reason, trace=trace)
        step = float(np.sqrt(np.linalg.norm(y_new - y) ** 2
                             + np.linalg.norm(x_new - x) ** 2))
        value = float(spec.leader_objective(y_new, x_new))
        fmean = float(np.mean([fo.value(y_new, x_new)
                               for fo in spec.followers]))
        done = step < cfg.stop_eps or t == cfg.t_max - 1
        if t == 0 or done or (t + 1) % cfg.trace_every == 0:
            hvals = np.array([c.fn(y_new, x_new) for c in spec.follower_ineq]
                             or [0.0])
            n_act = int(np.sum(hvals >= -1e-6)) if spec.follower_ineq else 0
            crc = zlib.crc32(np.flatnonzero(hvals >= -1e-6)
                             .astype(np.int64).tobytes())
            trace.append(TraceRecord(
                t=t + 1, y=y_new.copy(), leader_value=value,
                follower_mean=fmean, ve_residual=inner_gap, step_norm=step,
                active_fingerprint=f"{n_act}:{crc:08x}",
                wall_ms=(time.perf_counter() - tic) * 1e3))
        y, x = y_new, x_new
        trace.iterations = t + 1
        if step < cfg.stop_eps:
            trace.converged = True
            trace.stop_reason = "joint step norm below stop_eps"
            break
    else:
        trace.stop_reason = "iteration limit reached"
    return y, x, trace
