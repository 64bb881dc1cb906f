"""Polytope and invariant-set tests.

Redundancy removal and the invariant-set iteration are checked against a
2D vertex-enumeration oracle and brute-force forward simulation of
sampled points.
"""

import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ictrack.polytope import (
    InvariantSetResult,
    Polytope,
    PolytopeError,
    max_invariant_set,
)


def vertices_2d(poly, tol=1e-9):
    """All vertices of a bounded 2D polytope by row-pair enumeration."""
    pts = []
    for i, j in itertools.combinations(range(poly.nrows), 2):
        mat = poly.f[[i, j]]
        if abs(np.linalg.det(mat)) < 1e-12:
            continue
        x = np.linalg.solve(mat, poly.g[[i, j]])
        if np.all(poly.f @ x <= poly.g + tol):
            pts.append(x)
    uniq = []
    for p in pts:
        if not any(np.linalg.norm(p - q) < 1e-8 for q in uniq):
            uniq.append(p)
    return sorted(uniq, key=lambda v: (round(v[0], 8), round(v[1], 8)))


class TestBasics:
    def test_row_normalization(self):
        poly = Polytope([[2.0, 0.0]], [4.0])
        assert_allclose(poly.f, [[1.0, 0.0]])
        assert_allclose(poly.g, [2.0])

    def test_contains_tolerance_band(self):
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        assert box.contains([0.0, 0.0], tol=0.0)
        assert not box.contains([1.0 + 1e-6, 0.0], tol=1e-9)
        assert box.contains([1.0 + 1e-6, 0.0], tol=1e-3)

    def test_violation_signs(self):
        box = Polytope.from_box([-1.0], [1.0])
        v = box.violation([2.0])
        assert v.max() == pytest.approx(1.0)
        assert box.violation([0.0]).max() <= 0.0

    def test_dimension_checks(self):
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        with pytest.raises(PolytopeError):
            box.contains([1.0])
        with pytest.raises(PolytopeError):
            box.intersect(Polytope.from_box([-1.0], [1.0]))
        with pytest.raises(PolytopeError):
            box.preimage(np.eye(3))


class TestChebyshev:
    def test_unit_box(self):
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        center, radius = box.chebyshev_center()
        assert_allclose(center, [0.0, 0.0], atol=1e-9)
        assert radius == pytest.approx(1.0, abs=1e-9)

    def test_interval_midpoint(self):
        seg = Polytope.from_box([0.0], [2.0])
        center, radius = seg.chebyshev_center()
        assert center[0] == pytest.approx(1.0, abs=1e-9)
        assert radius == pytest.approx(1.0, abs=1e-9)

    def test_right_triangle_inradius(self):
        tri = Polytope([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]],
                       [0.0, 0.0, 1.0])
        _, radius = tri.chebyshev_center()
        assert radius == pytest.approx(1.0 / (2.0 + math.sqrt(2.0)), abs=1e-9)

    def test_empty_set(self):
        empty = Polytope([[1.0], [-1.0]], [0.0, -1.0])
        assert empty.is_empty()
        assert not Polytope.from_box([-1.0], [1.0]).is_empty()


class TestSetOperations:
    def test_interval_intersection(self):
        a = Polytope.from_box([-1.0], [1.0])
        b = Polytope.from_box([0.0], [2.0])
        both = a.intersect(b)
        lo, hi = both.bounding_box()
        assert_allclose([lo[0], hi[0]], [0.0, 1.0], atol=1e-9)

    def test_intersection_idempotent_commutative(self):
        rng = np.random.default_rng(3)
        f = rng.normal(size=(6, 2))
        poly = Polytope(f, np.ones(6)).intersect(
            Polytope.from_box([-2.0, -2.0], [2.0, 2.0]))
        same = poly.intersect(poly)
        assert same.equals(poly)
        other = Polytope.from_box([-0.5, -3.0], [0.7, 3.0])
        assert poly.intersect(other).equals(other.intersect(poly))

    def test_disjoint_intersection_is_empty(self):
        a = Polytope.from_box([-1.0], [0.0])
        b = Polytope.from_box([1.0], [2.0])
        assert a.intersect(b).is_empty()

    def test_shift_interval(self):
        seg = Polytope.from_box([-1.0], [1.0]).shift([1.0])
        lo, hi = seg.bounding_box()
        assert_allclose([lo[0], hi[0]], [0.0, 2.0], atol=1e-9)

    def test_shift_identities(self):
        poly = Polytope.from_box([-1.0, -2.0], [3.0, 2.0])
        assert poly.shift([0.0, 0.0]).equals(poly)
        x0 = np.array([0.3, -1.1])
        assert poly.shift(x0).contains(x0) == poly.contains([0.0, 0.0])
        back = poly.shift(x0).shift(-x0)
        assert back.equals(poly)

    def test_scale_and_erode(self):
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        lo, hi = box.scale(0.5).bounding_box()
        assert_allclose(lo, [-0.5, -0.5], atol=1e-9)
        assert_allclose(hi, [0.5, 0.5], atol=1e-9)
        lo, hi = box.erode([0.1, 0.2]).bounding_box()
        assert_allclose(lo, [-0.9, -0.8], atol=1e-9)
        assert_allclose(hi, [0.9, 0.8], atol=1e-9)

    def test_preimage_identity_and_scaling(self):
        seg = Polytope.from_box([-1.0], [1.0])
        assert seg.preimage(np.eye(1)).equals(seg)
        doubled = seg.preimage(np.array([[0.5]]))
        lo, hi = doubled.bounding_box()
        assert_allclose([lo[0], hi[0]], [-2.0, 2.0], atol=1e-9)

    def test_preimage_rotation(self):
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        rotated = box.preimage(rot)
        grid = np.stack(np.meshgrid(np.linspace(-1.2, 1.2, 13),
                                    np.linspace(-1.2, 1.2, 13)), axis=-1)
        for point in grid.reshape(-1, 2):
            assert rotated.contains(point, tol=1e-9) == \
                box.contains(rot @ point, tol=1e-9)


class TestRemoveRedundant:
    def test_dominated_halfspace(self):
        poly = Polytope([[1.0], [1.0]], [1.0, 2.0]).remove_redundant()
        assert poly.nrows == 1
        assert_allclose(poly.g, [1.0])

    def test_duplicates(self):
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        doubled = Polytope(np.vstack([box.f, box.f]),
                           np.concatenate([box.g, box.g]))
        assert doubled.remove_redundant().nrows == 4

    def test_touching_row_is_kept(self):
        # x + y <= 2 touches the box corner (1,1): not redundant at tol.
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        s = math.sqrt(2.0)
        touch = Polytope(np.vstack([box.f, [[1 / s, 1 / s]]]),
                         np.concatenate([box.g, [2.0 / s]]))
        assert touch.remove_redundant().nrows == 5

    def test_slack_row_against_vertex_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            f = rng.normal(size=(5, 2))
            f /= np.linalg.norm(f, axis=1, keepdims=True)
            base = Polytope(np.vstack([f, np.eye(2), -np.eye(2)]),
                            np.concatenate([rng.uniform(0.5, 1.5, 5),
                                            np.full(4, 2.0)]))
            base = base.remove_redundant()
            # Append one strictly slack row; removal must restore the set.
            direction = rng.normal(size=2)
            direction /= np.linalg.norm(direction)
            slack_g = base.support(direction) + 0.5
            grown = Polytope(np.vstack([base.f, direction[None, :]]),
                             np.concatenate([base.g, [slack_g]]))
            cleaned = grown.remove_redundant()
            assert cleaned.nrows == base.nrows
            ref_verts = vertices_2d(base)
            new_verts = vertices_2d(cleaned)
            assert len(ref_verts) == len(new_verts)
            for a, b in zip(ref_verts, new_verts):
                assert_allclose(a, b, atol=1e-8)

    def test_membership_preserved(self):
        rng = np.random.default_rng(9)
        f = rng.normal(size=(12, 2))
        poly = Polytope(f, np.ones(12)).intersect(
            Polytope.from_box([-3.0, -3.0], [3.0, 3.0]))
        cleaned = poly.remove_redundant()
        for point in poly.sample_points(200, seed=1):
            assert cleaned.contains(point, tol=1e-9)


class TestSampling:
    def test_membership_and_determinism(self):
        box = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])
        pts = box.sample_points(100, seed=7)
        assert pts.shape == (100, 2)
        for p in pts:
            assert box.contains(p, tol=0.0)
        again = box.sample_points(100, seed=7)
        assert np.array_equal(pts, again)

    def test_zero_points(self):
        box = Polytope.from_box([-1.0], [1.0])
        assert box.sample_points(0, seed=0).shape == (0, 1)

    def test_empty_interior_rejected(self):
        flat = Polytope([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                        [0.0, 0.0, 1.0, 1.0])
        with pytest.raises(PolytopeError):
            flat.sample_points(5, seed=0)


class TestMaxInvariantSet:
    def test_contraction_keeps_state_box(self):
        res = max_invariant_set(np.array([[0.5]]),
                                Polytope.from_box([-1.0], [1.0]))
        assert isinstance(res, InvariantSetResult)
        assert res.converged
        lo, hi = res.polytope.bounding_box()
        assert_allclose([lo[0], hi[0]], [-1.0, 1.0], atol=1e-9)

    def test_input_row_dominates(self):
        res = max_invariant_set(
            np.array([[0.5]]),
            Polytope.from_box([-1.0], [1.0]),
            u_set=Polytope.from_box([-0.4], [0.4]),
            gain=np.array([[1.0]]))
        lo, hi = res.polytope.bounding_box()
        assert_allclose([lo[0], hi[0]], [-0.4, 0.4], atol=1e-9)

    def test_unstable_map_rejected(self):
        with pytest.raises(PolytopeError):
            max_invariant_set(np.eye(2),
                              Polytope.from_box([-1.0, -1.0], [1.0, 1.0]))

    def test_double_integrator_invariance(self):
        ts = 0.01
        a = np.array([[1.0, ts], [0.0, 1.0]])
        b = np.array([[0.5 * ts * ts], [ts]])
        gain = np.array([[3.94, 2.975]])
        a_cl = a - b @ gain
        x_set = Polytope.from_box([-1.25, -5.0], [1.25, 5.0])
        u_set = Polytope.from_box([-9.81], [10.19])
        res = max_invariant_set(a_cl, x_set, u_set=u_set, gain=gain)
        assert res.converged
        omega = res.polytope
        pts = omega.sample_points(1000, seed=11)
        succ = pts @ a_cl.T
        inputs = -(gain @ pts.T).ravel()
        for x, xn, u in zip(pts, succ, inputs):
            assert omega.contains(xn, tol=1e-9)
            assert x_set.contains(x, tol=1e-9)
            assert -9.81 - 1e-9 <= u <= 10.19 + 1e-9

    def test_iteration_is_monotone(self):
        # Re-run the defining iteration by hand and compare the fixpoint.
        ts = 0.01
        a_cl = np.array([[1.0, ts], [0.0, 1.0]]) \
            - np.array([[0.5 * ts * ts], [ts]]) @ np.array([[3.94, 2.975]])
        x_set = Polytope.from_box([-1.25, -5.0], [1.25, 5.0])
        current = x_set
        for _ in range(200):
            nxt = current.intersect(current.preimage(a_cl))
            assert current.contains_polytope(nxt, tol=1e-8)
            if nxt.equals(current, tol=1e-9):
                break
            current = nxt
        res = max_invariant_set(a_cl, x_set)
        assert res.polytope.equals(current, tol=1e-7)
