"""
Tests for driving contexts, relevancy predicates and the correlation report.
"""

import unittest
from datetime import datetime, timedelta
from zoneinfo import ZoneInfo

import pytest

from drive_context.config import RunConfig, with_overrides
from drive_context.context import (
    REPORT_COLUMNS,
    Context,
    DayType,
    Period,
    assign_context,
    check_relevancy_overlap,
    check_relevancy_physical,
    check_relevancy_temporal,
    correlation,
    group_by_context,
    period_of,
    report_json,
    summarize_routes,
    write_report_csv,
)
from drive_context.errors import ConfigError
from drive_context.events import CongestionEvidence, Event, EventDatabase, EventKind
from drive_context.segmentation import CutPoint
from drive_context.trajectory import destination, haversine

from builders import START, TUESDAY_4PM, make_trajectory

COLUMBUS = ZoneInfo("America/New_York")


def at(year, month, day, hour, minute=0):
    return datetime(year, month, day, hour, minute, tzinfo=COLUMBUS).timestamp()


def fact(p, subtype="traffic_signal"):
    return Event(p[0], p[1], EventKind.PHYSICAL_FACT, subtype, "osm")


def spread_cuts(tid, n, t0=TUESDAY_4PM):
    """n interior cuts 1 km apart plus a trip-end cut 1 km beyond the last."""
    cuts = []
    for i in range(n + 1):
        lat, lng = destination(START, 0.0, 1000.0 * (i + 1))
        cuts.append(CutPoint(tid, 10 * (i + 1), lat, lng, t0 + i, is_trip_end=(i == n)))
    return cuts


def config(**overrides):
    return with_overrides(RunConfig(), **{"describe.min_cuts": 1, **overrides})


class TestAssignContext(unittest.TestCase):
    def test_tuesday_afternoon_is_weekday_p3(self):
        traj = make_trajectory("t", [40.0, 40.0], t0=at(2021, 3, 2, 16, 30))
        self.assertEqual(assign_context(traj, COLUMBUS), Context("all", DayType.WD, Period.P3))

    def test_saturday_night_is_weekend_p5(self):
        traj = make_trajectory("t", [40.0, 40.0], t0=at(2021, 3, 6, 2, 0))
        context = assign_context(traj, COLUMBUS)
        self.assertEqual((context.day_type, context.period), (DayType.WE, Period.P5))

    def test_ten_oclock_starts_p2(self):
        traj = make_trajectory("t", [40.0, 40.0], t0=at(2021, 3, 3, 10, 0))
        self.assertEqual(assign_context(traj, COLUMBUS).period, Period.P2)

    def test_period_boundaries(self):
        self.assertEqual([period_of(h) for h in (5, 6, 9, 15, 19, 22, 23)],
                         [Period.P5, Period.P1, Period.P1, Period.P3, Period.P4, Period.P5, Period.P5])

    def test_route_override(self):
        traj = make_trajectory("t", [40.0, 40.0], route_id="r1")
        self.assertEqual(assign_context(traj, COLUMBUS).route_id, "r1")
        self.assertEqual(assign_context(traj, COLUMBUS, route_id="r2").route_id, "r2")


class TestRelevancy(unittest.TestCase):
    """Per-cut predicates."""

    def test_fact_at_the_cut_is_relevant(self):
        db = EventDatabase([fact(START)])
        self.assertTrue(check_relevancy_physical(START, db, 200.0))

    def test_fact_300m_away_is_not(self):
        db = EventDatabase([fact(destination(START, 90.0, 300.0))])
        self.assertFalse(check_relevancy_physical(START, db, 200.0))

    def test_empty_database_is_never_relevant(self):
        self.assertFalse(check_relevancy_physical(START, EventDatabase(), 200.0))

    def test_temporal_relevancy_is_inclusive_at_th(self):
        centroid = destination(START, 45.0, 200.0)
        evidence = CongestionEvidence("t", 1, 5, centroid, (1, 16), 12)
        th = haversine(START, centroid)
        self.assertTrue(check_relevancy_temporal(START, [evidence], th))
        self.assertFalse(check_relevancy_temporal(START, [evidence], th - 0.01))
        self.assertFalse(check_relevancy_temporal(START, [], th))

    def test_overlap_strategy_needs_time_overlap(self):
        start = TUESDAY_4PM
        db = EventDatabase([
            Event(START[0], START[1], EventKind.TEMPORAL_PHYSICAL, "congestion", "bing", start, start + 600)
        ])
        self.assertTrue(check_relevancy_overlap(START, db, (start + 300, start + 900)))
        self.assertFalse(check_relevancy_overlap(START, db, (start + 700, start + 900)))


def test_three_of_eight_cuts_near_facts():
    traj = make_trajectory("t", [80.0] * 100)
    cuts = spread_cuts("t", 8)
    db = EventDatabase([fact(cuts[i].latlng) for i in (0, 3, 6)] + [fact(cuts[-1].latlng)])
    groups = group_by_context([traj], {"t": cuts}, COLUMBUS)

    reports = correlation(groups, db, mode="physical", cfg=config(), tz=COLUMBUS)

    assert len(reports) == 1
    report = reports[0]
    assert report.n_cutting_points == 8
    assert report.correlation_physical == pytest.approx(0.375)
    assert report.value("physical") == pytest.approx(0.375)
    assert report.correlation_temporal == 0.0


def test_including_the_trip_end_counts_it():
    traj = make_trajectory("t", [80.0] * 100)
    cuts = spread_cuts("t", 8)
    db = EventDatabase([fact(cuts[i].latlng) for i in (0, 3, 6)] + [fact(cuts[-1].latlng)])
    groups = group_by_context([traj], {"t": cuts}, COLUMBUS, include_trip_end=True)

    report = correlation(groups, db, cfg=config(), tz=COLUMBUS)[0]

    assert report.n_cutting_points == 9
    assert report.correlation_physical == pytest.approx(4 / 9)


def test_no_events_gives_zero_correlation():
    traj = make_trajectory("t", [80.0] * 100)
    groups = group_by_context([traj], {"t": spread_cuts("t", 5)}, COLUMBUS)
    report = correlation(groups, EventDatabase(), cfg=config(), tz=COLUMBUS)[0]
    assert (report.correlation_physical, report.correlation_temporal, report.correlation_all) == (0.0, 0.0, 0.0)


class TestCombinedCorrelation(unittest.TestCase):
    """Physical and temporal evidence together."""

    def setUp(self):
        # slow run at points 21-30, corroborated by 12 Tuesday 16:00-16:59 reports
        self.traj = make_trajectory("t", [80.0] * 20 + [20.0] * 10 + [80.0] * 70)
        run = self.traj.points[20:30]
        self.centroid = (sum(p.lat for p in run) / 10, sum(p.lng for p in run) / 10)
        when = datetime(2021, 3, 2, 16, 30, tzinfo=COLUMBUS)
        self.reports = [
            Event(self.centroid[0], self.centroid[1], EventKind.TEMPORAL_PHYSICAL, "congestion", "bing",
                  (when - timedelta(weeks=w)).timestamp(), (when - timedelta(weeks=w)).timestamp() + 1800)
            for w in range(1, 13)
        ]
        near = self.traj.points[25]
        far = spread_cuts("t", 4)
        self.cuts = [CutPoint("t", 26, near.lat, near.lng, near.t)] + far
        self.groups = group_by_context([self.traj], {"t": self.cuts}, COLUMBUS)

    def test_all_is_at_least_each_single_mode(self):
        db = EventDatabase(self.reports + [fact(self.cuts[2].latlng)])
        report = correlation(self.groups, db, cfg=config(), tz=COLUMBUS)[0]
        self.assertEqual(report.n_cutting_points, 5)
        self.assertAlmostEqual(report.correlation_temporal, 0.2)
        self.assertAlmostEqual(report.correlation_physical, 0.2)
        self.assertAlmostEqual(report.correlation_all, 0.4)
        self.assertGreaterEqual(report.correlation_all, max(report.correlation_physical, report.correlation_temporal))

    def test_adding_events_never_lowers_correlation(self):
        before = correlation(self.groups, EventDatabase(self.reports), cfg=config(), tz=COLUMBUS)[0]
        more = EventDatabase(self.reports + [fact(c.latlng) for c in self.cuts[1:3]])
        after = correlation(self.groups, more, cfg=config(), tz=COLUMBUS)[0]
        for mode in ("physical", "temporal", "all"):
            self.assertGreaterEqual(after.value(mode), before.value(mode))

    def test_parallel_matches_serial(self):
        db = EventDatabase(self.reports)
        serial = correlation(self.groups, db, cfg=config(), tz=COLUMBUS, jobs=1)
        parallel = correlation(self.groups, db, cfg=config(), tz=COLUMBUS, jobs=2)
        self.assertEqual(serial, parallel)


def test_context_below_min_cuts_is_left_out(caplog):
    traj = make_trajectory("t", [80.0] * 100)
    groups = group_by_context([traj], {"t": spread_cuts("t", 3)}, COLUMBUS)

    with caplog.at_level("WARNING", logger="drive_context"):
        reports = correlation(groups, EventDatabase(), cfg=RunConfig(), tz=COLUMBUS)

    assert reports == []
    assert "3 cutting points < min_cuts 10" in caplog.text


def test_unknown_mode_is_rejected():
    with pytest.raises(ConfigError):
        correlation({}, EventDatabase(), mode="spatial")


def test_route_summary():
    short = make_trajectory("a", [40.0] * 10, route_id="r1")
    long = make_trajectory("b", [40.0] * 20, route_id="r1")
    summary = summarize_routes([short, long], {"a": spread_cuts("a", 0), "b": spread_cuts("b", 2)})
    assert summary == [{"route": "r1", "n_traj": 2, "avg_duration_s": 14.0, "avg_segments": 2.0}]


def test_report_outputs(tmp_path):
    traj = make_trajectory("t", [80.0] * 100)
    cuts = spread_cuts("t", 8)
    db = EventDatabase([fact(cuts[0].latlng)])
    reports = correlation(group_by_context([traj], {"t": cuts}, COLUMBUS), db, cfg=config(), tz=COLUMBUS)
    path = tmp_path / "report.csv"

    write_report_csv(str(path), reports, echo={"seed": 0})
    payload = report_json(reports, "all", summarize_routes([traj], {"t": cuts}), db, COLUMBUS, {"seed": 0})

    lines = path.read_text().splitlines()
    assert lines[1] == ",".join(REPORT_COLUMNS)
    assert lines[2].startswith("all,WD,P3,1,8,0.125,0.0,0.125")
    assert payload["contexts"][0]["correlation"] == pytest.approx(0.125)
    assert len(payload["contexts"][0]["cuts"]) == 8
    assert payload["event_sources"] == {"osm": 1}
    assert len(payload["congestion_histogram"]) == 7
