"""Trajectory model and the plaintext matching predicate."""

import numpy as np
import pytest
from hypothesis import given, assume, settings
from hypothesis import strategies as st

from fedtraj import DomainError, Point, Segment, Trajectory, euclidean, interpolate, matches
from fedtraj.geometry import locate, locate_many

from oracles import match_margin, plain_matches
from strategies import query_on, trajectories, trajectory_points


def traj(rows, ident="t"):
    return Trajectory(id=ident, points=np.array(rows, dtype=np.float64))


class TestConstruction:
    def test_rejects_wrong_shape(self):
        with pytest.raises(DomainError):
            traj([[0.0, 1.0]])
        with pytest.raises(DomainError):
            Trajectory(id="t", points=np.zeros((0, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            traj([[0, np.nan, 0]])
        with pytest.raises(DomainError):
            Point(0.0, np.inf, 0.0)

    def test_rejects_decreasing_timestamps(self):
        with pytest.raises(DomainError):
            traj([[0, 0, 0], [2, 1, 1], [1, 2, 2]])

    def test_repeated_timestamps_allowed(self):
        t = traj([[0, 0, 0], [5, 1, 1], [5, 9, 9]])
        assert len(t) == 3

    def test_points_are_read_only(self):
        t = traj([[0, 0, 0], [1, 1, 1]])
        with pytest.raises(ValueError):
            t.points[0, 0] = 7.0

    def test_backwards_segment_rejected(self):
        with pytest.raises(DomainError):
            Segment(Point(2, 0, 0), Point(1, 0, 0))

    def test_segment_array_single_point(self):
        t = traj([[3, 1, 2]])
        seg = t.segment_array()
        assert seg.shape == (1, 6)
        assert np.array_equal(seg[0], [3, 1, 2, 3, 1, 2])

    def test_segment_array_chains_points(self):
        t = traj([[0, 0, 0], [1, 1, 0], [3, 1, 5]])
        seg = t.segment_array()
        assert seg.shape == (2, 6)
        assert np.array_equal(seg[:, 3], [1.0, 3.0])


class TestInterpolation:
    def test_midpoint(self):
        s = Segment(Point(0, 0, 0), Point(10, 4, 8))
        assert np.allclose(interpolate(s, 5.0), [2.0, 4.0])

    def test_endpoints_exact(self):
        s = Segment(Point(2, 1.5, -3.25), Point(6, 9.5, 4.75))
        assert np.array_equal(interpolate(s, 2.0), [1.5, -3.25])
        assert np.array_equal(interpolate(s, 6.0), [9.5, 4.75])

    def test_zero_duration_answers_origin(self):
        s = Segment(Point(4, 7, 7), Point(4, 7, 7))
        assert np.array_equal(interpolate(s, 4.0), [7.0, 7.0])

    def test_outside_span_raises(self):
        s = Segment(Point(0, 0, 0), Point(1, 1, 1))
        with pytest.raises(DomainError):
            interpolate(s, 1.5)

    @given(trajectories(min_points=2, max_points=6), st.floats(0, 1))
    def test_interpolant_inside_segment_bbox(self, t, f):
        seg = t.segments()[0]
        ts = seg.o.ts + f * (seg.d.ts - seg.o.ts)
        loc = interpolate(seg, ts)
        eps = 1e-9
        assert min(seg.o.x, seg.d.x) - eps <= loc[0] <= max(seg.o.x, seg.d.x) + eps
        assert min(seg.o.y, seg.d.y) - eps <= loc[1] <= max(seg.o.y, seg.d.y) + eps


class TestLocate:
    def test_exact_sample_hits_stored_location(self):
        t = traj([[0, 0, 0], [10, 6, 2], [20, 0, 0]])
        locs, covered = locate_many(t, np.array([10.0]))
        assert covered[0] and np.array_equal(locs[0], [6.0, 2.0])

    def test_interior_point_interpolates(self):
        t = traj([[0, 0, 0], [10, 10, 0]])
        locs, covered = locate_many(t, np.array([2.5]))
        assert covered[0] and np.allclose(locs[0], [2.5, 0.0])

    def test_outside_span_not_covered(self):
        t = traj([[5, 0, 0], [6, 1, 1]])
        locs, covered = locate_many(t, np.array([4.999, 5.0, 6.0, 6.001]))
        assert list(covered) == [False, True, True, False]

    def test_repeated_timestamp_earliest_sample_wins(self):
        t = traj([[0, 0, 0], [5, 1, 1], [5, 9, 9], [8, 9, 9]])
        assert np.array_equal(locate(t, 5.0), [1.0, 1.0])

    def test_locate_none_outside(self):
        t = traj([[0, 0, 0], [1, 1, 1]])
        assert locate(t, 2.0) is None


class TestMatches:
    def test_interpolated_worked_example(self):
        # query sits near the path only through interpolation, never near a sample
        t = traj([[0, 2, 1], [2, 1, 2], [5, 4, 5], [7, 6, 1]])
        q = traj([[4, 3, 3], [6, 4, 2]], ident="q")
        assert np.allclose(locate(t, 4.0), [3.0, 4.0])
        assert np.allclose(locate(t, 6.0), [5.0, 3.0])
        assert matches(t, q, 1.5)
        assert not matches(t, q, 1.3)

    def test_distance_exactly_tau_is_a_match(self):
        t = traj([[0, 0, 0], [10, 0, 0]])
        q = traj([[5, 3, 4]], ident="q")  # distance exactly 5
        assert matches(t, q, 5.0)
        assert not matches(t, q, 4.999999)

    def test_query_timestamp_outside_span_fails(self):
        t = traj([[0, 0, 0], [10, 0, 0]])
        q = traj([[11, 0, 0]], ident="q")
        assert not matches(t, q, 1e9)

    def test_tau_must_be_positive(self):
        t = traj([[0, 0, 0]])
        with pytest.raises(DomainError):
            matches(t, t, 0.0)

    def test_single_point_trajectory(self):
        t = traj([[5, 2, 2]])
        assert matches(t, traj([[5, 2.5, 2]], ident="q"), 0.6)
        assert not matches(t, traj([[5.1, 2, 2]], ident="q"), 0.6)

    @settings(max_examples=300, deadline=None)
    @given(st.data())
    def test_agrees_with_exact_oracle(self, data):
        t = data.draw(trajectories(min_points=1, max_points=7))
        q_pts = data.draw(query_on(t.points))
        tau = data.draw(st.integers(1, 5000)) / 10.0
        verdict = matches(t, Trajectory(id="q", points=q_pts), tau)
        expected = plain_matches(t.points, q_pts, tau)
        if verdict != expected:
            # float vs exact may split only on knife-edge distances
            assume(match_margin(t.points, q_pts, tau) > 1e-9)
            raise AssertionError("verdicts differ on a clear-margin case")


def test_euclidean_hand_values():
    assert euclidean((0, 0), (3, 4)) == 5.0
    assert euclidean(np.array([1.0, 1.0]), np.array([1.0, 1.0])) == 0.0
