"""One-shot charging-price benchmark.

A platform sets a single electricity price p; each of N users picks a
charging amount x_i maximizing b_i x_i - s_i x_i^2 / 2 - p x_i, subject
to the shared capacity sum(x) <= C. The equilibrium has a closed form
(see analytic_charging_equilibrium), which makes this the calibration
problem for the whole solver stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GameConfigError, UnsupportedInstanceError
from ..game import Constraint, FollowerObjective, GameSpec
from ..polytopes import ConvexPolytope


@dataclass(frozen=True)
class ChargingInstance:
    b: np.ndarray          # utility slope at zero charge, one per user
    s: np.ndarray          # satisfaction curvature, positive
    capacity: float        # joint charging limit C
    name: str = ""

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "capacity", float(self.capacity))
        if b.shape != s.shape or b.ndim != 1 or b.size == 0:
            raise GameConfigError("b and s must be equal-length vectors")
        if np.any(s <= 0):
            raise GameConfigError("satisfaction parameters must be positive")
        if self.capacity <= 0:
            raise GameConfigError("capacity must be positive")

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def demand_score(self) -> float:
        """B = sum b_i / s_i: total demand at price zero."""
        return float(np.sum(self.b / self.s))

    @property
    def slope_score(self) -> float:
        """S = sum 1 / s_i: demand sensitivity to price."""
        return float(np.sum(1.0 / self.s))

    @property
    def analytic_valid(self) -> bool:
        """True when the closed-form optimum lands on the interior branch."""
        return self.demand_score <= 2.0 * self.capacity


def default_charging_instance() -> ChargingInstance:
    return ChargingInstance(b=(10.0, 10.0), s=(1.0, 1.0), capacity=20.0,
                            name="charging-default")


def _follower(i: int, inst: ChargingInstance) -> FollowerObjective:
    b_i, s_i, n = float(inst.b[i]), float(inst.s[i]), inst.n
    hx = np.zeros((1, n))
    hx[0, i] = -s_i
    hy = np.array([[-1.0]])

    def value(y, x):
        xi = float(np.asarray(x)[i])
        return b_i * xi - 0.5 * s_i * xi * xi - float(y[0]) * xi

    def grad_own(y, x):
        xi = float(np.asarray(x)[i])
        return np.array([b_i - s_i * xi - float(y[0])])

    return FollowerObjective(value=value, grad_own=grad_own,
                             hess_x_own=lambda y, x: hx,
                             hess_y_own=lambda y, x: hy)


def build_charging_game(inst: ChargingInstance) -> GameSpec:
    n = inst.n
    cap = inst.capacity
    ones = np.ones(n)
    zero_y = np.zeros(1)
    joint = ConvexPolytope(n, A=ones[None, :], b=np.array([cap]))
    leader_box = ConvexPolytope.box(np.array([0.0]),
                                    np.array([float(inst.b.max())]))
    capacity_row = Constraint(
        fn=lambda y, x: float(np.sum(x)) - cap,
        grad_x=lambda y, x: ones,
        grad_y=lambda y, x: zero_y,
        label="joint-capacity")
    return GameSpec(
        n_leader=1,
        follower_dims=tuple([1] * n),
        leader_objective=lambda y, x: float(y[0]) * float(np.sum(x)),
        leader_grad_y=lambda y, x: np.array([float(np.sum(x))]),
        leader_grad_x=lambda y, x: np.full(n, float(y[0])),
        followers=tuple(_follower(i, inst) for i in range(n)),
        follower_ineq=(capacity_row,),
        leader_set=leader_box,
        follower_set_builder=lambda y: joint,
        leader_sense="max",
        name=inst.name or f"charging-N{n}")


def charging_demand(inst: ChargingInstance, price: float) -> np.ndarray:
    """Equilibrium charging profile at a fixed price, both branches.

    Interior when aggregate demand B - p S fits under the capacity;
    otherwise the shared-capacity multiplier mu = (B - p S - C)/S shifts
    every user's effective price so the total lands exactly on C.
    """
    p = float(price)
    B, S, C = inst.demand_score, inst.slope_score, inst.capacity
    mu = max(0.0, (B - p * S - C) / S)
    return (inst.b - p - mu) / inst.s


def analytic_charging_equilibrium(inst: ChargingInstance):
    """Closed-form leader price and follower profile, (p_star, x_star)."""
    if not inst.analytic_valid:
        raise UnsupportedInstanceError(
            f"instance {inst.name or '?'} has demand score "
            f"{inst.demand_score:.3f} > 2C = {2 * inst.capacity:.3f}; "
            "the closed form only covers the interior branch")
    p_star = inst.demand_score / (2.0 * inst.slope_score)
    return p_star, charging_demand(inst, p_star)


def generate_charging_instances(seed: int, count: int,
                                sizes=(2, 5, 10, 25)):
    """Random analytic-valid instances, b ~ U[2,10], s ~ U[0.5,2].

    Capacity is set to 0.75 B so the closed form always applies; sizes
    cycle through the given tuple.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(sizes[k % len(sizes)])
        b = rng.uniform(2.0, 10.0, size=n)
        s = rng.uniform(0.5, 2.0, size=n)
        cap = 0.75 * float(np.sum(b / s))
        out.append(ChargingInstance(b=b, s=s, capacity=cap,
                                    name=f"charging-{seed}-{k:03d}"))
    return out
