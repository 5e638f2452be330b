"""Outer-loop gradient solver: convergence, traces, warm starts."""

import numpy as np
import pytest

from stackeq import (ConvergenceError, PIGDConfig, SolveTrace, TraceRecord,
                     VEConfig, default_leader_start, leader_polytope,
                     solve_pigd, warm_start_chain)
from stackeq.problems import charging_demand

from conftest import constant_leader_game, quadratic_tracking_game


def record_key(rec):
    # everything deterministic; wall_ms is measured and excluded on purpose
    return (rec.t, rec.y.tobytes(), rec.leader_value, rec.follower_mean,
            rec.ve_residual, rec.step_norm, rec.active_fingerprint)


class TestChargingOuterLoop:
    def test_reaches_revenue_optimum(self, charging_spec):
        y, point, trace = solve_pigd(charging_spec, y0=np.array([1.0]))
        assert trace.converged
        assert abs(y[0] - 5.0) <= 1e-3
        np.testing.assert_allclose(point.x, [5.0, 5.0], atol=1e-3)
        assert trace.stop_reason == "step norm below stop_eps"

    def test_leader_value_climbs(self, charging_spec):
        _, _, trace = solve_pigd(charging_spec, y0=np.array([1.0]))
        vals = np.array([r.leader_value for r in trace.records])
        assert np.all(np.diff(vals) >= -1e-9)
        assert abs(vals[-1] - 50.0) <= 1e-2

    def test_iterates_stay_feasible(self, charging_spec):
        lpoly = leader_polytope(charging_spec)
        _, _, trace = solve_pigd(charging_spec, y0=np.array([1.0]),
                                 cfg=PIGDConfig(t_max=50, stop_eps=1e-12))
        for rec in trace.records:
            assert lpoly.max_violation(rec.y) <= 1e-9

    def test_gradient_backends_agree(self, charging_spec):
        cfg_a = PIGDConfig(t_max=120, gradient_mode="lifted")
        cfg_b = PIGDConfig(t_max=120, gradient_mode="vi")
        ya, _, _ = solve_pigd(charging_spec, y0=np.array([2.0]), cfg=cfg_a)
        yb, _, _ = solve_pigd(charging_spec, y0=np.array([2.0]), cfg=cfg_b)
        np.testing.assert_allclose(ya, yb, atol=1e-6)

    def test_repeat_runs_identical(self, charging_spec):
        cfg = PIGDConfig(t_max=40, stop_eps=1e-12)
        y1, _, t1 = solve_pigd(charging_spec, y0=np.array([1.0]), cfg=cfg)
        y2, _, t2 = solve_pigd(charging_spec, y0=np.array([1.0]), cfg=cfg)
        assert y1.tobytes() == y2.tobytes()
        assert [record_key(r) for r in t1.records] == \
               [record_key(r) for r in t2.records]

    def test_iteration_cap(self, charging_spec):
        _, _, trace = solve_pigd(charging_spec, y0=np.array([1.0]),
                                 cfg=PIGDConfig(t_max=3, stop_eps=1e-15))
        assert not trace.converged
        assert trace.iterations == 3
        assert trace.stop_reason == "iteration limit reached"

    def test_trace_thinning(self, charging_spec):
        cfg = PIGDConfig(t_max=20, stop_eps=1e-15, trace_every=7)
        _, _, trace = solve_pigd(charging_spec, y0=np.array([1.0]), cfg=cfg)
        assert [r.t for r in trace.records] == [1, 7, 14, 20]

    def test_inner_failure_carries_partial_trace(self, charging_spec):
        cfg = PIGDConfig(ve_config=VEConfig(rho=1e-9, k_max=2, polish=False))
        with pytest.raises(ConvergenceError) as err:
            solve_pigd(charging_spec, y0=np.array([1.0]), cfg=cfg)
        assert err.value.trace is not None
        assert err.value.trace.iterations == 0
        assert "t=1" in str(err.value)


class TestToyGames:
    def test_constant_leader_single_step(self):
        spec = constant_leader_game()
        y, point, trace = solve_pigd(spec, y0=np.array([0.4]))
        assert trace.converged and trace.iterations == 1
        np.testing.assert_allclose(y, [0.4], atol=0.0)
        np.testing.assert_allclose(point.x, [0.0], atol=1e-8)
        assert trace.records[0].step_norm == 0.0

    def test_tracking_toy_finds_target(self):
        spec = quadratic_tracking_game()
        y, point, trace = solve_pigd(spec, y0=np.array([0.0]))
        assert trace.converged
        assert abs(y[0] - 3.0) <= 1e-3
        assert abs(point.x[0] - 3.0) <= 1e-3


class TestDispatchOuterLoop:
    def test_tracking_error_shrinks(self, small_dispatch_spec):
        lpoly = leader_polytope(small_dispatch_spec)
        cfg = PIGDConfig(t_max=60, stop_eps=1e-10)
        _, _, trace = solve_pigd(small_dispatch_spec, cfg=cfg)
        vals = [r.leader_value for r in trace.records]
        assert vals[-1] < vals[0]  # leader minimizes
        for rec in trace.records:
            assert lpoly.max_violation(rec.y) <= 1e-9

    def test_start_outside_box_is_projected(self, small_dispatch_spec):
        cfg = PIGDConfig(t_max=2, stop_eps=1e-15)
        _, _, trace = solve_pigd(small_dispatch_spec,
                                 y0=np.array([25.0, 0.0]), cfg=cfg)
        np.testing.assert_allclose(trace.records[0].y, [20.0, 1.0])


class TestDefaultStart:
    def test_charging_starts_at_projected_origin(self, charging_spec):
        np.testing.assert_allclose(default_leader_start(charging_spec), [0.0])

    def test_dispatch_uses_declared_start(self, small_dispatch_spec):
        start = default_leader_start(small_dispatch_spec)
        np.testing.assert_allclose(start, [10.5, 10.5])
        start[0] = -99.0  # caller-owned copy
        np.testing.assert_allclose(
            default_leader_start(small_dispatch_spec), [10.5, 10.5])


class TestWarmStartChain:
    def test_constant_path_is_stable(self, charging_spec):
        results = warm_start_chain(charging_spec, [np.array([4.0])] * 3)
        assert all(r.converged for r in results)
        for r in results[1:]:
            np.testing.assert_allclose(r.x_star, results[0].x_star,
                                       atol=1e-6)

    def test_path_tracks_demand_curve(self, charging_instance, charging_spec):
        prices = [4.0, 4.1, 4.2]
        results = warm_start_chain(charging_spec,
                                   [np.array([p]) for p in prices])
        for p, r in zip(prices, results):
            np.testing.assert_allclose(
                r.x_star, charging_demand(charging_instance, p), atol=1e-4)

    def test_dispatch_warm_matches_cold(self, small_dispatch_spec):
        path = [np.array([9.0, 11.0]), np.array([10.0, 10.0]),
                np.array([11.0, 9.0])]
        warm = warm_start_chain(small_dispatch_spec, path)
        cold = warm_start_chain(small_dispatch_spec, path[-1:])
        np.testing.assert_allclose(warm[-1].x_star, cold[0].x_star,
                                   atol=1e-4)


class TestConfigAndTrace:
    @pytest.mark.parametrize("kwargs", [
        {"leader_step": 0.0},
        {"stop_eps": -1.0},
        {"t_max": 0},
        {"trace_every": 0},
        {"gradient_mode": "newton"},
    ])
    def test_bad_config_rejected(self, kwargs):
        with pytest.raises(ValueError):
            PIGDConfig(**kwargs)

    def test_trace_requires_increasing_iteration(self):
        trace = SolveTrace(solver="pigd")
        rec = TraceRecord(t=3, y=np.zeros(1), leader_value=0.0,
                          follower_mean=0.0, ve_residual=0.0, step_norm=0.0,
                          active_fingerprint="0:0", wall_ms=0.0)
        trace.append(rec)
        with pytest.raises(ValueError):
            trace.append(rec)
