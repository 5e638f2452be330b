"""Projected implicit gradient ascent on the leader's decision.

Each outer step solves the followers' variational equilibrium, recovers
the lifted KKT point, differentiates it implicitly in y, and takes a
projected gradient step on the leader's objective. Stops when the leader
step norm falls below ``stop_eps``.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import ConvergenceError
from .game import joint_polytope, leader_polytope
from .implicit import (build_active_system, implicit_gradient,
                       implicit_gradient_vi, leader_total_gradient)
from .lifted import detect_active_set, layout_of, recover_multipliers
from .polytopes import project
from .ve import VEConfig, solve_ve

BACKTRACK_PATIENCE = 10


@dataclass
class PIGDConfig:
    leader_step: float = 1e-2
    stop_eps: float = 1e-6
    t_max: int = 5000
    ve_config: VEConfig = field(default_factory=VEConfig)
    trace_every: int = 1
    # gradient_mode: "lifted" evaluates the pseudo-inverse formula on the
    # full lifted system, "vi" differentiates the equilibrium KKT system
    # directly, "auto" picks by problem size.
    gradient_mode: str = "auto"

    def __post_init__(self):
        if self.leader_step <= 0 or self.stop_eps <= 0:
            raise ValueError("leader_step and stop_eps must be positive")
        if self.t_max < 1 or self.trace_every < 1:
            raise ValueError("t_max and trace_every must be >= 1")
        if self.gradient_mode not in ("auto", "lifted", "vi"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")


@dataclass(frozen=True)
class TraceRecord:
    t: int
    y: np.ndarray
    leader_value: float
    follower_mean: float
    ve_residual: float
    step_norm: float
    active_fingerprint: str
    wall_ms: float  # measured time; serialized separately from the trace


@dataclass
class SolveTrace:
    solver: str
    records: List[TraceRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    stop_reason: str = ""

    def append(self, rec: TraceRecord):
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError("trace iteration index must increase")
        self.records.append(rec)


def _fingerprint(active) -> str:
    idx = tuple(active.ineq_z) + (-1,) + tuple(active.lambda_zero)
    crc = zlib.crc32(np.asarray(idx, dtype=np.int64).tobytes())
    return f"{len(active.ineq_z)}:{crc:08x}"


def _follower_mean(spec, y, x) -> float:
    vals = [fo.value(y, x) for fo in spec.followers]
    return float(np.mean(vals))


def default_leader_start(spec, poly=None):
    """Instance default start, else the projection of the origin."""
    if spec.default_leader_start is not None:
        return np.asarray(spec.default_leader_start, dtype=float).copy()
    poly = poly if poly is not None else leader_polytope(spec)
    return project(poly, np.zeros(spec.n_leader))


def solve_pigd(spec, y0=None, cfg: Optional[PIGDConfig] = None):
    """Run the outer loop; returns (y, lifted point, trace).

    A failed inner equilibrium solve aborts with the partial trace
    attached; hitting t_max returns with converged=False.
    """
    cfg = cfg if cfg is not None else PIGDConfig()
    lpoly = leader_polytope(spec)
    y = project(lpoly, np.asarray(y0, dtype=float)
                if y0 is not None else default_leader_start(spec, lpoly))
    sign = 1.0 if spec.leader_sense == "max" else -1.0
    mode = cfg.gradient_mode
    if mode == "auto":
        mode = "lifted" if layout_of(spec).n_w <= 300 else "vi"
    trace = SolveTrace(solver="pigd")
    rho = cfg.leader_step
    worse_streak = 0
    prev_value = None
    x_warm = None
    point = None
    for t in range(1, cfg.t_max + 1):
        tic = time.perf_counter()
        poly = joint_polytope(spec, y)
        try:
            ve = solve_ve(spec, y, x0=x_warm, config=cfg.ve_config, poly=poly)
        except ConvergenceError as exc:
            trace.stop_reason = f"inner equilibrium solve failed at t={t}"
            trace.iterations = t - 1
            raise ConvergenceError(trace.stop_reason, trace=trace) from exc
        x = ve.x_star
        point = recover_multipliers(spec, y, x)
        active = detect_active_set(spec, y, point)
        if mode == "lifted":
            system = build_active_system(spec, y, point, active)
            dwdy = implicit_gradient(system)
        else:
            dwdy = implicit_gradient_vi(spec, y, point, active)
        grad = leader_total_gradient(spec, y, point, dwdy)
        y_next = project(lpoly, y + sign * rho * grad)
        step = float(np.linalg.norm(y_next - y))
        value = float(spec.leader_objective(y, x))
        if prev_value is not None and sign * (value - prev_value) < 0.0:
            worse_streak += 1
            if worse_streak >= BACKTRACK_PATIENCE:
                rho *= 0.5
                worse_streak = 0
        else:
            worse_streak = 0
        prev_value = value
        done = step < cfg.stop_eps or t == cfg.t_max
        if t == 1 or done or t % cfg.trace_every == 0:
            trace.append(TraceRecord(
                t=t, y=y.copy(), leader_value=value,
                follower_mean=_follower_mean(spec, y, x),
                ve_residual=ve.final_step_norm, step_norm=step,
                active_fingerprint=_fingerprint(active),
                wall_ms=(time.perf_counter() - tic) * 1e3))
        y = y_next
        x_warm = x
        trace.iterations = t
        if step < cfg.stop_eps:
            trace.converged = True
            trace.stop_reason = "step norm below stop_eps"
            break
    else:
        trace.stop_reason = "iteration limit reached"
    # refresh the lower level at the final y so the returned pair matches
    ve = solve_ve(spec, y, x0=x_warm, config=cfg.ve_config)
    point = recover_multipliers(spec, y, ve.x_star)
    return y, point, trace


def warm_start_chain(spec, y_path, cfg: Optional[PIGDConfig] = None):
    """Solve the lower level along a path of leader decisions.

    Each solve warm-starts from the previous equilibrium, mirroring what
    the outer loop does between consecutive iterates.
    """
    cfg = cfg if cfg is not None else PIGDConfig()
    out = []
    x_warm = None
    for y in y_path:
        res = solve_ve(spec, np.asarray(y, dtype=float), x0=x_warm,
                       config=cfg.ve_config)
        out.append(res)
        x_warm = res.x_star
    return out
