"""
Tests for trajectory loading, geometry and preprocessing.
"""

import logging
import unittest
from dataclasses import replace

import numpy as np
import pytest

from drive_context.config import QuantizationConfig
from drive_context.errors import DataError, DegenerateTrajectoryError, SchemaError
from drive_context.trajectory import (
    Trajectory,
    TrajectoryPoint,
    destination,
    haversine,
    load_trajectories,
    preprocess,
    quantize,
    quantize_dheading,
    wrap_degrees,
    write_trajectories,
)

from builders import make_trajectory, write_csv

HEADER = ("id", "timestamp", "lat", "lng", "speed", "accel", "heading")


class TestGeometry(unittest.TestCase):
    """Great-circle helpers."""

    def test_haversine_identity_is_zero(self):
        self.assertEqual(haversine((39.96, -83.0), (39.96, -83.0)), 0.0)

    def test_one_degree_of_latitude(self):
        self.assertAlmostEqual(haversine((0.0, 0.0), (1.0, 0.0)), 111195.0, delta=10.0)

    def test_haversine_is_symmetric(self):
        a, b = (39.96, -83.0), (40.01, -82.91)
        self.assertAlmostEqual(haversine(a, b), haversine(b, a), places=9)

    def test_destination_travels_requested_distance(self):
        start = (39.96, -83.0)
        end = destination(start, 45.0, 500.0)
        self.assertAlmostEqual(haversine(start, end), 500.0, delta=0.01)


class TestQuantization(unittest.TestCase):
    def test_nearest_grid_value(self):
        self.assertEqual(quantize(61.2, 5.0), 60.0)
        self.assertEqual(quantize(63.0, 5.0), 65.0)

    def test_ties_go_toward_zero(self):
        self.assertEqual(quantize(2.5, 1.0), 2.0)
        self.assertEqual(quantize(-2.5, 1.0), -2.0)
        self.assertEqual(quantize(7.5, 5.0), 5.0)

    def test_wrap_degrees_takes_short_way_round(self):
        self.assertEqual(wrap_degrees(10.0 - 350.0), 20.0)
        self.assertEqual(wrap_degrees(350.0 - 10.0), -20.0)

    def test_dheading_stays_in_half_open_range(self):
        self.assertEqual(quantize_dheading(180.0, 5.0), -180.0)
        self.assertEqual(quantize_dheading(-180.0, 5.0), -180.0)


def test_load_groups_and_sorts_by_id(tmp_path):
    path = write_csv(tmp_path / "t.csv", HEADER, [
        ("b", 0, 39.96, -83.0, 10, 0, 90),
        ("a", 0, 39.96, -83.0, 10, 0, 90),
        ("b", 1, 39.96, -82.9999, 11, 0, 90),
        ("a", 1, 39.96, -82.9999, 12, 0, 90),
        ("a", 2, 39.96, -82.9998, 13, 0, 90),
    ])

    trajs = load_trajectories(str(path))

    assert [t.id for t in trajs] == ["a", "b"]
    assert [len(t) for t in trajs] == [3, 2]
    assert trajs[0].points[2].speed == 13.0
    assert trajs[0].route_id == "all"


def test_invalid_row_is_skipped_with_line_number(tmp_path, caplog):
    path = write_csv(tmp_path / "t.csv", HEADER, [
        ("a", 0, 39.96, -83.0, 10, 0, 90),
        ("a", 1, 95.0, -83.0, 10, 0, 90),
        ("a", 2, 39.96, -82.9998, 10, 0, 90),
    ])

    with caplog.at_level(logging.WARNING, logger="drive_context"):
        trajs = load_trajectories(str(path))

    assert len(trajs[0]) == 2
    assert "line=3" in caplog.text
    assert "lat 95.0 out of range" in caplog.text


def test_missing_column_is_a_schema_error(tmp_path):
    path = write_csv(tmp_path / "t.csv", HEADER[:-1], [("a", 0, 39.96, -83.0, 10, 0)])

    with pytest.raises(SchemaError) as exc:
        load_trajectories(str(path))
    assert "heading" in str(exc.value)


def test_non_monotonic_timestamps_name_the_trajectory(tmp_path):
    path = write_csv(tmp_path / "t.csv", HEADER, [
        ("trip-7", 5, 39.96, -83.0, 10, 0, 90),
        ("trip-7", 3, 39.96, -83.0, 10, 0, 90),
    ])

    with pytest.raises(DataError) as exc:
        load_trajectories(str(path))
    assert "trip-7" in str(exc.value)


def test_iso_timestamps_and_route_column(tmp_path):
    path = write_csv(tmp_path / "t.csv", HEADER + ("route",), [
        ("a", "2021-03-02T16:00:00Z", 39.96, -83.0, 10, 0, 90, "r1"),
        ("a", "2021-03-02T16:00:01Z", 39.96, -82.9999, 10, 0, 90, "r1"),
    ])

    traj = load_trajectories(str(path))[0]

    assert traj.t_start == 1614700800.0
    assert traj.duration == 1.0
    assert traj.route_id == "r1"


def test_written_trajectories_load_back(tmp_path):
    original = [make_trajectory("x", [30.0, 40.0, 50.0], route_id="r9")]
    path = tmp_path / "out.csv"

    write_trajectories(str(path), original, echo={"seed": 1})
    loaded = load_trajectories(str(path))

    assert path.read_text().startswith("# drivecontext ")
    assert loaded[0].id == "x"
    assert loaded[0].route_id == "r9"
    for a, b in zip(loaded[0].points, original[0].points):
        assert a.lat == pytest.approx(b.lat, abs=1e-9)
        assert a.speed == pytest.approx(b.speed)


class TestPreprocess(unittest.TestCase):
    """Cleaning and quantization of a trajectory."""

    def test_dheading_wraps_across_north(self):
        traj = make_trajectory("h", [30.0, 30.0], headings=[350.0, 10.0])
        points = preprocess(traj, QuantizationConfig())
        self.assertEqual(points[0].dheading_q, 0.0)
        self.assertEqual(points[1].dheading_q, 20.0)

    def test_speed_is_quantized(self):
        traj = make_trajectory("s", [61.2, 61.2])
        points = preprocess(traj, QuantizationConfig())
        self.assertEqual(points[0].speed_q, 60.0)

    def test_teleporting_fix_is_dropped(self):
        traj = make_trajectory("n", [36.0] * 5)
        pts = list(traj.points)
        jump = pts[2]
        pts[2] = TrajectoryPoint(jump.t, jump.lat + 0.05, jump.lng, jump.speed, jump.accel, jump.heading)
        noisy = Trajectory("n", tuple(pts))

        cleaned = preprocess(noisy, QuantizationConfig())

        self.assertEqual(len(cleaned), 4)
        self.assertNotIn(pts[2], [p.base for p in cleaned])

    def test_single_point_is_degenerate(self):
        traj = make_trajectory("one", [30.0])
        with self.assertRaises(DegenerateTrajectoryError):
            preprocess(traj, QuantizationConfig())

    def test_preprocess_is_deterministic(self):
        traj = make_trajectory("d", [30.0, 35.0, 42.0, 50.0], headings=[0.0, 5.0, 12.0, 20.0])
        first = preprocess(traj, QuantizationConfig())
        second = preprocess(traj, QuantizationConfig())
        self.assertEqual(first, second)

    def test_preprocess_is_idempotent_on_quantized_data(self):
        cfg = QuantizationConfig()
        traj = make_trajectory(
            "q",
            [30.0, 35.0, 40.0, 40.0, 45.0, 50.0, 50.0, 45.0],
            headings=[350.0, 355.0, 5.0, 10.0, 10.0, 20.0, 15.0, 15.0],
            accels=[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, -1.0],
        )
        first = preprocess(traj, cfg)
        again = Trajectory("q", tuple(replace(p.base, speed=p.speed_q, accel=p.accel_q) for p in first))
        second = preprocess(again, cfg)

        self.assertEqual([p.triple for p in second], [p.triple for p in first])
        self.assertEqual([p.base for p in second], list(again.points))


def test_dheading_chain_reintegrates_to_final_heading():
    rng = np.random.default_rng(17)
    step = QuantizationConfig().dheading_step
    for _ in range(50):
        n = int(rng.integers(2, 30))
        headings = [float(h) for h in rng.uniform(0.0, 360.0, size=n)]
        traj = make_trajectory("h", [30.0] * n, headings=headings)

        points = preprocess(traj, QuantizationConfig())

        assert len(points) == n
        integrated = headings[0] + sum(p.dheading_q for p in points)
        assert abs(wrap_degrees(headings[-1] - integrated)) <= (n - 1) * step / 2 + 1e-9


def test_haversine_triangle_inequality():
    rng = np.random.default_rng(23)
    for _ in range(1000):
        a, b, c = [(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180))) for _ in range(3)]
        assert haversine(a, c) <= (haversine(a, b) + haversine(b, c)) * (1 + 1e-6)


def test_rows_of_one_trajectory_may_interleave_with_others(tmp_path):
    path = write_csv(tmp_path / "t.csv", HEADER, [
        ("a", 0, 39.96, -83.0, 10, 0, 90),
        ("b", 0, 39.96, -83.0, 10, 0, 90),
        ("a", 1, 39.96, -82.9999, 10, 0, 90),
        ("b", 1, 39.96, -82.9999, 10, 0, 90),
    ])

    trajs = load_trajectories(str(path))

    assert [(t.id, len(t)) for t in trajs] == [("a", 2), ("b", 2)]
