"""Projection and linear minimization over polyhedral sets.

Closed-form cases are frozen as literals; structural properties
(idempotence, non-expansiveness, the variational characterization) are
checked on randomized sets.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackeq import (ConvexPolytope, InfeasibleSetError,
                     UnboundedProblemError, linear_minimize, project,
                     restrict, vertices)


def simplex_oracle(v, total=1.0):
    # sort-and-threshold construction, independent of the library path
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, v.size + 1)
    k = ks[u - css / ks > 0][-1]
    tau = css[k - 1] / k
    return np.maximum(v - tau, 0.0)


def price_box(m=3):
    return ConvexPolytope(m, lo=np.ones(m), hi=np.full(m, 20.0))


def unit_simplex(d=3):
    return ConvexPolytope(d, E=np.ones((1, d)), f=np.array([1.0]),
                          lo=np.zeros(d))


def capacity_halfspace(c=20.0, d=2):
    return ConvexPolytope(d, A=np.ones((1, d)), b=np.array([c]))


class TestClosedForms:
    def test_box_clamps_componentwise(self):
        got = project(price_box(), np.array([0.5, 25.0, 7.0]))
        np.testing.assert_allclose(got, [1.0, 20.0, 7.0], atol=1e-12)

    def test_simplex_center(self):
        got = project(unit_simplex(), np.array([0.5, 0.5, 0.5]))
        np.testing.assert_allclose(got, [1 / 3, 1 / 3, 1 / 3], atol=1e-12)

    def test_halfspace_formula(self):
        # v - ((a@v - c)/||a||^2) a = (15,15) - (10/2)(1,1); lands on sum = 20
        got = project(capacity_halfspace(), np.array([15.0, 15.0]))
        np.testing.assert_allclose(got, [10.0, 10.0], atol=1e-12)

    def test_interior_point_fixed(self):
        v = np.array([3.0, 4.0])
        np.testing.assert_allclose(project(capacity_halfspace(), v), v)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    @settings(max_examples=60, deadline=None)
    def test_simplex_matches_sort_oracle(self, vals):
        v = np.array(vals, dtype=float)
        got = project(unit_simplex(v.size), v)
        np.testing.assert_allclose(got, simplex_oracle(v), atol=1e-9)

    @given(st.lists(st.floats(-30, 30), min_size=3, max_size=6), st.data())
    @settings(max_examples=60, deadline=None)
    def test_box_matches_clip(self, vals, data):
        v = np.array(vals, dtype=float)
        lo = np.array(data.draw(st.lists(
            st.floats(-10, 0), min_size=v.size, max_size=v.size)))
        hi = np.array(data.draw(st.lists(
            st.floats(1, 10), min_size=v.size, max_size=v.size)))
        got = project(ConvexPolytope(v.size, lo=lo, hi=hi), v)
        np.testing.assert_allclose(got, np.clip(v, lo, hi), atol=1e-12)


class TestLinearMinimize:
    def test_simplex_picks_cheapest_vertex(self):
        got = linear_minimize(unit_simplex(), np.array([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(got, [0.0, 1.0, 0.0], atol=1e-12)

    def test_box_sign_rule(self):
        box = ConvexPolytope(2, lo=np.zeros(2), hi=np.ones(2))
        got = linear_minimize(box, np.array([-1.0, 1.0]))
        np.testing.assert_allclose(got, [1.0, 0.0], atol=1e-12)

    def test_halfspace_value_unique_up_to_ties(self):
        z = linear_minimize(capacity_halfspace(), np.array([-1.0, -1.0]))
        assert abs(float(-z.sum()) - (-20.0)) < 1e-9

    def test_unbounded_direction_raises(self):
        with pytest.raises(UnboundedProblemError):
            linear_minimize(capacity_halfspace(), np.array([1.0, 0.0]))

    def test_tie_break_deterministic(self):
        box = ConvexPolytope(2, lo=np.zeros(2), hi=np.ones(2))
        c = np.array([0.0, -1.0])
        a = linear_minimize(box, c)
        b = linear_minimize(box, c)
        np.testing.assert_array_equal(a, b)
        # lexicographically smallest of the tied vertices (0,1) and (1,1)
        np.testing.assert_allclose(a, [0.0, 1.0], atol=1e-12)

    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(5)
        poly = ConvexPolytope(2, A=np.array([[1.0, 1.0], [1.0, -1.0]]),
                              b=np.array([1.5, 0.8]),
                              lo=np.zeros(2), hi=np.ones(2))
        verts = vertices(poly)
        assert 3 <= len(verts) <= 10
        for _ in range(20):
            c = rng.normal(size=2)
            best = min(float(c @ v) for v in verts)
            got = float(c @ linear_minimize(poly, c))
            assert abs(got - best) < 1e-9


class TestProperties:
    def general_poly(self):
        return ConvexPolytope(3, A=np.array([[1.0, 1.0, 1.0], [-1.0, 2.0, 0.0]]),
                              b=np.array([2.0, 1.0]),
                              lo=np.full(3, -1.0), hi=np.full(3, 2.0))

    def test_idempotent(self):
        poly = self.general_poly()
        rng = np.random.default_rng(0)
        for _ in range(25):
            p = project(poly, rng.normal(scale=3, size=3))
            q = project(poly, p)
            assert np.linalg.norm(q - p) <= 2e-9

    def test_nonexpansive(self):
        poly = self.general_poly()
        rng = np.random.default_rng(1)
        for _ in range(25):
            u, v = rng.normal(scale=3, size=(2, 3))
            d = np.linalg.norm(project(poly, u) - project(poly, v))
            assert d <= np.linalg.norm(u - v) + 4e-9

    def test_variational_characterization(self):
        poly = self.general_poly()
        rng = np.random.default_rng(2)
        v = rng.normal(scale=4, size=3)
        p = project(poly, v)
        for _ in range(100):
            u = project(poly, rng.normal(scale=3, size=3))
            assert float((v - p) @ (u - p)) <= 1e-8

    def test_feasible_output(self):
        poly = self.general_poly()
        rng = np.random.default_rng(3)
        for _ in range(40):
            p = project(poly, rng.normal(scale=5, size=3))
            assert poly.max_violation(p) <= 1e-8


class TestConstructionAndRestrict:
    def test_empty_set_rejected(self):
        with pytest.raises(InfeasibleSetError):
            ConvexPolytope(2, A=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                           b=np.array([-1.0, -1.0]))

    def test_bad_shapes_rejected(self):
        with pytest.raises(ValueError):
            ConvexPolytope(2, A=np.ones((1, 3)), b=np.ones(1))

    def test_restrict_fixes_other_coordinates(self):
        poly = ConvexPolytope(3, A=np.ones((1, 3)), b=np.array([2.0]),
                              lo=np.zeros(3))
        sub = restrict(poly, [0], np.array([0.0, 0.5, 0.5]))
        # remaining budget for the kept coordinate is 2 - 1 = 1
        got = project(sub, np.array([5.0]))
        np.testing.assert_allclose(got, [1.0], atol=1e-9)

    def test_vertices_of_unit_square(self):
        box = ConvexPolytope(2, lo=np.zeros(2), hi=np.ones(2))
        vs = vertices(box)
        want = {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
        got = {tuple(np.round(v, 9)) for v in vs}
        assert got == want
