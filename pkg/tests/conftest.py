"""Shared fixtures: benchmark instances plus a few hand-rolled toy games."""

import numpy as np
import pytest

from stackeq import Constraint, FollowerObjective, GameSpec
from stackeq.problems import (ChargingInstance,
                              build_charging_game, build_dispatch_game,
                              default_charging_instance,
                              generate_dispatch_instances)


@pytest.fixture(scope="session")
def charging_instance():
    return default_charging_instance()


@pytest.fixture(scope="session")
def charging_spec(charging_instance):
    return build_charging_game(charging_instance)


@pytest.fixture(scope="session")
def tight_instance():
    # capacity low enough that the joint limit binds at moderate prices
    return ChargingInstance(b=(10.0, 10.0), s=(1.0, 1.0), capacity=0.5,
                            name="charging-tight")


@pytest.fixture(scope="session")
def tight_spec(tight_instance):
    return build_charging_game(tight_instance)


@pytest.fixture(scope="session")
def small_dispatch_instance():
    return generate_dispatch_instances(seed=3, N=3, M=2, count=1)[0]


@pytest.fixture(scope="session")
def small_dispatch_spec(small_dispatch_instance):
    return build_dispatch_game(small_dispatch_instance)


def quadratic_tracking_game(n_leader=1):
    """Single unconstrained follower chasing the leader: max_x -(x - y)^2.

    The equilibrium map is x*(y) = y, so every sensitivity is the identity.
    The leader maximizes -(x - 3)^2 through the follower, optimal at y = 3.
    """
    follower = FollowerObjective(
        value=lambda y, x: -float((x[0] - y[0]) ** 2),
        grad_own=lambda y, x: np.array([-2.0 * (x[0] - y[0])]),
        hess_x_own=lambda y, x: np.array([[-2.0]]),
        hess_y_own=lambda y, x: np.array([[2.0]]),
    )
    return GameSpec(
        n_leader=n_leader,
        follower_dims=(1,),
        leader_objective=lambda y, x: -float((x[0] - 3.0) ** 2),
        leader_grad_y=lambda y, x: np.zeros(n_leader),
        leader_grad_x=lambda y, x: np.array([-2.0 * (x[0] - 3.0)]),
        followers=(follower,),
        name="toy-tracking",
    )


def constant_leader_game():
    """Leader objective constant: one projected step and done."""
    follower = FollowerObjective(
        value=lambda y, x: -float(x[0] ** 2),
        grad_own=lambda y, x: np.array([-2.0 * x[0]]),
        hess_x_own=lambda y, x: np.array([[-2.0]]),
        hess_y_own=lambda y, x: np.array([[0.0]]),
    )
    return GameSpec(
        n_leader=1,
        follower_dims=(1,),
        leader_objective=lambda y, x: 7.0,
        leader_grad_y=lambda y, x: np.zeros(1),
        leader_grad_x=lambda y, x: np.zeros(1),
        followers=(follower,),
        name="toy-constant",
    )


def zero_field_game():
    """D identically zero over a box; every feasible point is an equilibrium."""
    follower = FollowerObjective(
        value=lambda y, x: 1.0,
        grad_own=lambda y, x: np.zeros(2),
        hess_x_own=lambda y, x: np.zeros((2, 2)),
        hess_y_own=lambda y, x: np.zeros((2, 1)),
    )
    lo = Constraint(fn=lambda y, x: -x[0] - 1.0,
                    grad_x=lambda y, x: np.array([-1.0, 0.0]),
                    grad_y=lambda y, x: np.zeros(1), owner=0, label="lo0")
    lo1 = Constraint(fn=lambda y, x: -x[1] - 1.0,
                     grad_x=lambda y, x: np.array([0.0, -1.0]),
                     grad_y=lambda y, x: np.zeros(1), owner=0, label="lo1")
    hi = Constraint(fn=lambda y, x: x[0] - 1.0,
                    grad_x=lambda y, x: np.array([1.0, 0.0]),
                    grad_y=lambda y, x: np.zeros(1), owner=0, label="hi0")
    hi1 = Constraint(fn=lambda y, x: x[1] - 1.0,
                     grad_x=lambda y, x: np.array([0.0, 1.0]),
                     grad_y=lambda y, x: np.zeros(1), owner=0, label="hi1")
    return GameSpec(
        n_leader=1,
        follower_dims=(2,),
        leader_objective=lambda y, x: float(x.sum()),
        leader_grad_y=lambda y, x: np.zeros(1),
        leader_grad_x=lambda y, x: np.ones(2),
        followers=(follower,),
        follower_ineq=(lo, lo1, hi, hi1),
        name="toy-zero-field",
    )


def convex_payoff_game():
    """Follower payoff +x^2/2 is convex, not concave: conditions must flag it."""
    follower = FollowerObjective(
        value=lambda y, x: 0.5 * float(x[0] ** 2),
        grad_own=lambda y, x: np.array([x[0]]),
        hess_x_own=lambda y, x: np.array([[1.0]]),
        hess_y_own=lambda y, x: np.array([[0.0]]),
    )
    lo = Constraint(fn=lambda y, x: -x[0],
                    grad_x=lambda y, x: np.array([-1.0]),
                    grad_y=lambda y, x: np.zeros(1), owner=0, label="lo")
    hi = Constraint(fn=lambda y, x: x[0] - 1.0,
                    grad_x=lambda y, x: np.array([1.0]),
                    grad_y=lambda y, x: np.zeros(1), owner=0, label="hi")
    return GameSpec(
        n_leader=1,
        follower_dims=(1,),
        leader_objective=lambda y, x: float(x[0]),
        leader_grad_y=lambda y, x: np.zeros(1),
        leader_grad_x=lambda y, x: np.ones(1),
        followers=(follower,),
        follower_ineq=(lo, hi),
        name="toy-convex-payoff",
    )
