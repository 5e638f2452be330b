"""Game description layer: derivative callables, residuals, feasibility.

The heart of this module is the finite-difference sweep: every declared
gradient and Hessian of both shipped problems is compared against central
differences of the callable one level below it, at random feasible points.
"""

import numpy as np
import pytest

import stackeq as sq
from stackeq import (FollowerProfile, GameConfigError,
                     GameSpec, InfeasiblePointError, block_slices,
                     assemble_gradient_field, joint_polytope, project,
                     residual_gne, residual_ve)

from conftest import zero_field_game

REL_TOL = 1e-5


def rel_err(got, want):
    got, want = np.asarray(got, float), np.asarray(want, float)
    return float(np.max(np.abs(got - want)) / max(1.0, np.max(np.abs(want))))


def central(fn, v, i, h):
    vp, vm = v.copy(), v.copy()
    vp[i] += h
    vm[i] -= h
    return (fn(vp) - fn(vm)) / (2 * h)


def feasible_points(spec, rng, count, y_lo, y_hi):
    """Random leader points paired with projected random follower profiles."""
    out = []
    for _ in range(count):
        y = rng.uniform(y_lo, y_hi, size=spec.n_leader)
        poly = joint_polytope(spec, y)
        x = project(poly, rng.normal(scale=1.0, size=spec.n))
        out.append((y, x))
    return out


def check_spec_derivatives(spec, points):
    h = 1e-6
    slices = block_slices(spec)
    for y, x in points:
        for i, fo in enumerate(spec.followers):
            sl = slices[i]
            g = fo.grad_own(y, x)
            fd = np.array([central(lambda v: fo.value(y, v), x, k, h)
                           for k in range(sl.start, sl.stop)])
            assert rel_err(g, fd) <= REL_TOL
            hx = fo.hess_x_own(y, x)
            fd_hx = np.column_stack([
                central(lambda v: fo.grad_own(y, v), x, k, h)
                for k in range(spec.n)])
            assert rel_err(hx, fd_hx) <= REL_TOL
            hy = fo.hess_y_own(y, x)
            fd_hy = np.column_stack([
                central(lambda v: fo.grad_own(v, x), y, k, h)
                for k in range(spec.n_leader)])
            assert rel_err(hy, fd_hy) <= REL_TOL
        gy = spec.leader_grad_y(y, x)
        fd_gy = np.array([central(lambda v: spec.leader_objective(v, x), y, k, h)
                          for k in range(spec.n_leader)])
        assert rel_err(gy, fd_gy) <= REL_TOL
        gx = spec.leader_grad_x(y, x)
        fd_gx = np.array([central(lambda v: spec.leader_objective(y, v), x, k, h)
                          for k in range(spec.n)])
        assert rel_err(gx, fd_gx) <= REL_TOL
        for c in spec.follower_ineq + spec.follower_eq:
            cx = c.grad_x(y, x)
            fd_cx = np.array([central(lambda v: c.fn(y, v), x, k, h)
                              for k in range(spec.n)])
            assert rel_err(cx, fd_cx) <= REL_TOL
            cy = c.grad_y(y, x)
            fd_cy = np.array([central(lambda v: c.fn(v, x), y, k, h)
                              for k in range(spec.n_leader)])
            assert rel_err(cy, fd_cy) <= REL_TOL


class TestDerivativeSweep:
    def test_charging_derivatives(self, charging_spec):
        rng = np.random.default_rng(11)
        pts = feasible_points(charging_spec, rng, 20, 0.0, 10.0)
        check_spec_derivatives(charging_spec, pts)

    def test_dispatch_derivatives(self, small_dispatch_spec):
        rng = np.random.default_rng(12)
        pts = feasible_points(small_dispatch_spec, rng, 20, 1.0, 20.0)
        check_spec_derivatives(small_dispatch_spec, pts)


class TestGradientField:
    def test_charging_field_formula(self, charging_spec):
        field = assemble_gradient_field(charging_spec)
        d = field.evaluate(np.array([5.0]), np.array([5.0, 5.0]))
        np.testing.assert_allclose(d, [0.0, 0.0], atol=1e-12)
        # off equilibrium: D_i = b_i - s_i x_i - p
        d = field.evaluate(np.array([2.0]), np.array([1.0, 3.0]))
        np.testing.assert_allclose(d, [7.0, 5.0], atol=1e-12)

    def test_charging_blocks_decouple(self, charging_spec):
        field = assemble_gradient_field(charging_spec)
        y = np.array([4.0])
        a = field.evaluate(y, np.array([1.0, 2.0]))
        b = field.evaluate(y, np.array([1.0, 9.0]))
        assert a[0] == b[0]  # block 0 blind to x_1

    def test_dispatch_field_matches_grad_own(self, small_dispatch_spec):
        field = assemble_gradient_field(small_dispatch_spec)
        rng = np.random.default_rng(4)
        y = np.full(2, 10.0)
        x = project(joint_polytope(small_dispatch_spec, y),
                    rng.normal(size=small_dispatch_spec.n))
        d = field.evaluate(y, x)
        for i, fo in enumerate(small_dispatch_spec.followers):
            sl = block_slices(small_dispatch_spec)[i]
            np.testing.assert_allclose(d[sl], fo.grad_own(y, x), atol=1e-12)


class TestResiduals:
    def test_ve_residual_zero_at_equilibrium(self, charging_spec):
        y = np.array([5.0])
        assert residual_ve(charging_spec, y, np.array([5.0, 5.0])) <= 1e-9

    def test_ve_residual_positive_off_equilibrium(self, charging_spec):
        y = np.array([5.0])
        assert residual_ve(charging_spec, y, np.array([2.0, 2.0])) > 0.1

    def test_gne_residual_small_where_ve_residual_zero(self, charging_spec):
        y = np.array([5.0])
        x = np.array([5.0, 5.0])
        assert residual_ve(charging_spec, y, x) <= 1e-9
        assert residual_gne(charging_spec, y, x) <= 1e-6

    def test_gne_residual_dispatch_equilibrium(self, small_dispatch_spec):
        y = np.full(2, 10.0)
        res = sq.solve_ve(small_dispatch_spec, y)
        assert residual_ve(small_dispatch_spec, y, res.x_star) <= 1e-5
        assert residual_gne(small_dispatch_spec, y, res.x_star) <= 1e-6

    def test_unbounded_improvement_reported_infinite(self):
        spec = zero_field_game()
        # same game minus the upper bounds: improvement direction unbounded
        unbounded = GameSpec(
            n_leader=1, follower_dims=(2,),
            leader_objective=spec.leader_objective,
            leader_grad_y=spec.leader_grad_y,
            leader_grad_x=spec.leader_grad_x,
            followers=(sq.FollowerObjective(
                value=lambda y, x: float(x.sum()),
                grad_own=lambda y, x: np.ones(2),
                hess_x_own=lambda y, x: np.zeros((2, 2)),
                hess_y_own=lambda y, x: np.zeros((2, 1))),),
            follower_ineq=spec.follower_ineq[:2],  # keep lower bounds only
            name="toy-unbounded")
        val = residual_ve(unbounded, np.zeros(1), np.zeros(2))
        assert val == np.inf


class TestFeasibilityAndShapes:
    def test_infeasible_point_named(self, charging_spec):
        with pytest.raises(InfeasiblePointError):
            residual_ve(charging_spec, np.array([1.0]),
                        np.array([100.0, 100.0]))

    def test_dimension_mismatch_rejected(self, charging_spec):
        with pytest.raises(GameConfigError):
            GameSpec(n_leader=1, follower_dims=(1, 1, 1),
                     leader_objective=charging_spec.leader_objective,
                     leader_grad_y=charging_spec.leader_grad_y,
                     leader_grad_x=charging_spec.leader_grad_x,
                     followers=charging_spec.followers)

    def test_profile_length_checked(self):
        with pytest.raises(GameConfigError):
            FollowerProfile(x=np.zeros(3), dims=(1, 1))

    def test_profile_except_view(self):
        prof = FollowerProfile(x=np.array([1.0, 2.0, 3.0]), dims=(1, 2))
        np.testing.assert_array_equal(prof.except_block(0), [2.0, 3.0])
        np.testing.assert_array_equal(prof.block(1), [2.0, 3.0])
