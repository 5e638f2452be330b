"""Station-assignment benchmark: spatial pricing of N vehicles over M stations.

The operator prices M stations to steer expected vehicle counts toward
targets; each vehicle splits a unit of probability mass across stations,
trading off distance, price, and congestion. Joint limits cap each
station's deliverable energy and head count. No closed form exists; this
is the stress problem for the implicit-gradient machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GameConfigError
from ..game import Constraint, FollowerObjective, GameSpec
from ..polytopes import ConvexPolytope


@dataclass(frozen=True)
class DispatchInstance:
    ev_pos: np.ndarray       # (N, 2) in the unit square
    station_pos: np.ndarray  # (M, 2)
    e: np.ndarray            # (N,) required load per vehicle
    alpha_d: np.ndarray      # (N,) distance priority
    alpha_p: np.ndarray      # (N,) price priority
    alpha_v: np.ndarray      # (N,) congestion priority
    targets: np.ndarray      # (M,) desired expected counts V
    load_cap: np.ndarray     # (M,) energy limits L
    count_cap: np.ndarray    # (M,) head-count limits U
    p_min: float = 1.0
    p_max: float = 20.0
    name: str = ""

    def __post_init__(self):
        for attr in ("ev_pos", "station_pos", "e", "alpha_d", "alpha_p",
                     "alpha_v", "targets", "load_cap", "count_cap"):
            object.__setattr__(self, attr,
                               np.asarray(getattr(self, attr), dtype=float))
        object.__setattr__(self, "p_min", float(self.p_min))
        object.__setattr__(self, "p_max", float(self.p_max))
        n, m = self.n_ev, self.n_station
        if self.ev_pos.shape != (n, 2) or self.station_pos.shape != (m, 2):
            raise GameConfigError("positions must be (N,2) and (M,2) arrays")
        for attr in ("alpha_d", "alpha_p", "alpha_v"):
            if getattr(self, attr).shape != (n,):
                raise GameConfigError(f"{attr} must have one entry per vehicle")
        for attr in ("targets", "load_cap", "count_cap"):
            if getattr(self, attr).shape != (m,):
                raise GameConfigError(f"{attr} must have one entry per station")
        if not self.p_min < self.p_max:
            raise GameConfigError("p_min must be below p_max")
        if np.any(self.targets < 0) or abs(self.targets.sum() - n) > 1e-9:
            raise GameConfigError("targets must be nonnegative and sum to N")
        # a proportional split certifies the joint limits are satisfiable
        share = np.minimum(self.load_cap / self.e.sum(),
                           self.count_cap / n)
        if share.sum() < 1.0 - 1e-12:
            raise GameConfigError(
                "capacity configuration infeasible: proportional share "
                f"sums to {share.sum():.3f} < 1")

    @property
    def n_ev(self) -> int:
        return self.e.shape[0]

    @property
    def n_station(self) -> int:
        return self.targets.shape[0]

    def distances(self) -> np.ndarray:
        diff = self.ev_pos[:, None, :] - self.station_pos[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=2))


def even_targets(n: int, m: int) -> np.ndarray:
    """Even split of n across m slots, remainder to the lowest indices."""
    base = np.full(m, n // m, dtype=float)
    base[: n % m] += 1.0
    return base


def _follower(i: int, inst: DispatchInstance, dist: np.ndarray):
    n, m = inst.n_ev, inst.n_station
    a_d, a_p, a_v = (float(inst.alpha_d[i]), float(inst.alpha_p[i]),
                     float(inst.alpha_v[i]))
    e_i = float(inst.e[i])
    d_i = dist[i]
    hx = np.zeros((m, n * m))
    for st in range(m):
        hx[st, st + m * np.arange(n)] = -a_v
        hx[st, i * m + st] = -2.0 * a_v
    hy = -a_p * e_i * np.eye(m)

    def base_cost(y):
        return a_d * d_i + a_p * e_i * np.asarray(y, dtype=float)

    def value(y, x):
        X = np.asarray(x, dtype=float).reshape(n, m)
        v = X.sum(axis=0)
        xi = X[i]
        return -float(np.sum((base_cost(y) + a_v * v) * xi))

    def grad_own(y, x):
        X = np.asarray(x, dtype=float).reshape(n, m)
        v = X.sum(axis=0)
        return -(base_cost(y) + a_v * (v + X[i]))

    return FollowerObjective(value=value, grad_own=grad_own,
                             hess_x_own=lambda y, x: hx,
                             hess_y_own=lambda y, x: hy)


def _bound_rows(n: int, m: int):
    rows = []
    zero_y = np.zeros(m)
    for i in range(n):
        for st in range(m):
            idx = i * m + st
            g_lo = np.zeros(n * m)
            g_lo[idx] = -1.0
            rows.append(Constraint(
                fn=lambda y, x, idx=idx: -float(np.asarray(x)[idx]),
                grad_x=lambda y, x, g=g_lo: g,
                grad_y=lambda y, x: zero_y,
                owner=i, label=f"lo[{i},{st}]"))
    for i in range(n):
        for st in range(m):
            idx = i * m + st
            g_hi = np.zeros(n * m)
            g_hi[idx] = 1.0
            rows.append(Constraint(
                fn=lambda y, x, idx=idx: float(np.asarray(x)[idx]) - 1.0,
                grad_x=lambda y, x, g=g_hi: g,
                grad_y=lambda y, x: zero_y,
                owner=i, label=f"hi[{i},{st}]"))
    return rows


def build_dispatch_game(inst: DispatchInstance) -> GameSpec:
    n, m = inst.n_ev, inst.n_station
    dim = n * m
    dist = inst.distances()
    zero_y = np.zeros(m)
    ineq = _bound_rows(n, m)
    for st in range(m):
        g = np.zeros(dim)
        g[st + m * np.arange(n)] = inst.e
        cap = float(inst.load_cap[st])
        ineq.append(Constraint(
            fn=lambda y, x, g=g, cap=cap: float(g @ np.asarray(x)) - cap,
            grad_x=lambda y, x, g=g: g,
            grad_y=lambda y, x: zero_y,
            label=f"load[{st}]"))
    for st in range(m):
        g = np.zeros(dim)
        g[st + m * np.arange(n)] = 1.0
        cap = float(inst.count_cap[st])
        ineq.append(Constraint(
            fn=lambda y, x, g=g, cap=cap: float(g @ np.asarray(x)) - cap,
            grad_x=lambda y, x, g=g: g,
            grad_y=lambda y, x: zero_y,
            label=f"count[{st}]"))
    eq = []
    for i in range(n):
        g = np.zeros(dim)
        g[i * m: (i + 1) * m] = 1.0
        eq.append(Constraint(
            fn=lambda y, x, g=g: float(g @ np.asarray(x)) - 1.0,
            grad_x=lambda y, x, g=g: g,
            grad_y=lambda y, x: zero_y,
            owner=i, label=f"assign[{i}]"))

    A = np.zeros((2 * m, dim))
    for st in range(m):
        A[st, st + m * np.arange(n)] = inst.e
        A[m + st, st + m * np.arange(n)] = 1.0
    Eq = np.zeros((n, dim))
    for i in range(n):
        Eq[i, i * m: (i + 1) * m] = 1.0
    joint = ConvexPolytope(dim, A=A,
                           b=np.concatenate([inst.load_cap, inst.count_cap]),
                           E=Eq, f=np.ones(n),
                           lo=np.zeros(dim), hi=np.ones(dim))
    leader_box = ConvexPolytope.box(np.full(m, inst.p_min),
                                    np.full(m, inst.p_max))
    targets = inst.targets

    def counts(x):
        return np.asarray(x, dtype=float).reshape(n, m).sum(axis=0)

    return GameSpec(
        n_leader=m,
        follower_dims=tuple([m] * n),
        leader_objective=lambda y, x: float(np.sum((counts(x) - targets) ** 2)),
        leader_grad_y=lambda y, x: zero_y,
        leader_grad_x=lambda y, x: np.tile(2.0 * (counts(x) - targets), n),
        followers=tuple(_follower(i, inst, dist) for i in range(n)),
        follower_ineq=tuple(ineq),
        follower_eq=tuple(eq),
        leader_set=leader_box,
        follower_set_builder=lambda y: joint,
        default_leader_start=np.full(m, 0.5 * (inst.p_min + inst.p_max)),
        leader_sense="min",
        name=inst.name or f"dispatch-N{n}-M{m}")


def generate_dispatch_instances(seed: int, N: int, M: int, count: int):
    """Instance family with uniform positions, loads, and priorities.

    Targets split N evenly across stations; joint limits sit at 1.5x the
    uniform share so prices, not hard caps, do most of the steering.
    """
    if count < 1:
        raise GameConfigError("count must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        e = rng.uniform(0.2, 1.0, size=N)
        out.append(DispatchInstance(
            ev_pos=rng.uniform(0.0, 1.0, size=(N, 2)),
            station_pos=rng.uniform(0.0, 1.0, size=(M, 2)),
            e=e,
            alpha_d=rng.uniform(0.2, 0.4, size=N),
            alpha_p=rng.uniform(0.2, 0.4, size=N),
            alpha_v=rng.uniform(0.2, 0.4, size=N),
            targets=even_targets(N, M),
            load_cap=np.full(M, 1.5 * e.sum() / M),
            count_cap=np.full(M, 1.5 * N / M),
            p_min=1.0, p_max=20.0,
            name=f"dispatch-{seed}-{k:03d}"))
    return out


def default_dispatch_instance() -> DispatchInstance:
    inst = generate_dispatch_instances(seed=0, N=25, M=5, count=1)[0]
    return DispatchInstance(
        ev_pos=inst.ev_pos, station_pos=inst.station_pos, e=inst.e,
        alpha_d=inst.alpha_d, alpha_p=inst.alpha_p, alpha_v=inst.alpha_v,
        targets=inst.targets, load_cap=inst.load_cap,
        count_cap=inst.count_cap, p_min=inst.p_min, p_max=inst.p_max,
        name="dispatch-default")
