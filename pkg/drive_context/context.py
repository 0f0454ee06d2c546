"""
dDescribe: correlate cutting points with events, per driving context.

A context is (route, weekday/weekend, time-of-day period). For every context
the correlation is the fraction of its cutting points that are relevant to
some event:

    correlation = relevant cuts / all cuts

Physical relevancy means a physical fact lies within th of the cut.
Temporal relevancy means a congestion evidence of the same trajectory has its
centroid within th of the cut (or, with the overlap strategy, a
temporal-physical event within th overlaps the trip's time span).
"all" is their logical OR per cut.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from functools import partial
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple
from zoneinfo import ZoneInfo

import numpy as np

from . import csvio
from .config import RunConfig
from .errors import ConfigError
from .events import (
    PHYSICAL,
    CongestionEvidence,
    EventDatabase,
    EventFilter,
    EventKind,
    congestion_histogram,
    find_congestion_evidence,
)
from .parallel import run_parallel
from .segmentation import CutPoint
from .trajectory import LatLng, Trajectory, haversine

logger = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "route", "day_type", "period", "n_traj", "n_cuts",
    "corr_physical", "corr_temporal", "corr_all",
)

MODES = ("physical", "temporal", "all")


class DayType(str, Enum):
    WD = "WD"
    WE = "WE"


class Period(str, Enum):
    P1 = "P1"  # [06:00, 10:00)
    P2 = "P2"  # [10:00, 15:00)
    P3 = "P3"  # [15:00, 19:00)
    P4 = "P4"  # [19:00, 22:00)
    P5 = "P5"  # [22:00, 06:00)


class Context(NamedTuple):
    route_id: str
    day_type: DayType
    period: Period


def period_of(hour: int) -> Period:
    if 6 <= hour < 10:
        return Period.P1
    if 10 <= hour < 15:
        return Period.P2
    if 15 <= hour < 19:
        return Period.P3
    if 19 <= hour < 22:
        return Period.P4
    return Period.P5


def assign_context(traj: Trajectory, tz: ZoneInfo, route_id: Optional[str] = None) -> Context:
    """Context from the first point's local time; Monday to Friday are weekdays."""
    if not traj.points:
        raise ValueError(f"trajectory '{traj.id}' has no points")
    local = datetime.fromtimestamp(traj.t_start, tz)
    day_type = DayType.WD if local.weekday() < 5 else DayType.WE
    return Context(route_id or traj.route_id, day_type, period_of(local.hour))


def check_relevancy_physical(p: LatLng, db: EventDatabase, th: float = 200.0) -> bool:
    """True iff some physical fact lies within th meters of p."""
    return bool(db.within(p, th, PHYSICAL))


def check_relevancy_temporal(p: LatLng, evidences: Sequence[CongestionEvidence], th: float = 200.0) -> bool:
    """True iff some congestion evidence centroid lies within th meters of p."""
    return any(haversine(p, ev.centroid) <= th for ev in evidences)


def check_relevancy_overlap(
    p: LatLng,
    db: EventDatabase,
    span: Tuple[float, float],
    th: float = 200.0,
    subtypes: Optional[Sequence[str]] = None,
) -> bool:
    """True iff a temporal-physical event within th of p overlaps the time span."""
    flt = EventFilter(
        kind=EventKind.TEMPORAL_PHYSICAL,
        subtypes=tuple(subtypes) if subtypes is not None else None,
    )
    return bool(db.within_active(p, th, span, flt))


@dataclass(frozen=True)
class CutRelevance:
    """Relevancy of one cutting point."""
    trajectory_id: str
    cut_index: int
    lat: float
    lng: float
    physical: bool
    temporal: bool

    @property
    def relevant(self) -> bool:
        return self.physical or self.temporal

    def as_dict(self) -> Dict:
        return {
            "trajectory_id": self.trajectory_id,
            "cut_index": self.cut_index,
            "lat": self.lat,
            "lng": self.lng,
            "physical": self.physical,
            "temporal": self.temporal,
            "all": self.relevant,
        }


@dataclass(frozen=True)
class ContextReport:
    context: Context
    n_trajectories: int
    n_cutting_points: int
    correlation_physical: float
    correlation_temporal: float
    correlation_all: float
    cuts: Tuple[CutRelevance, ...] = field(default=(), compare=False)

    def value(self, mode: str) -> float:
        return {
            "physical": self.correlation_physical,
            "temporal": self.correlation_temporal,
            "all": self.correlation_all,
        }[mode]

    def row(self) -> Tuple:
        c = self.context
        return (
            c.route_id, c.day_type.value, c.period.value,
            self.n_trajectories, self.n_cutting_points,
            self.correlation_physical, self.correlation_temporal, self.correlation_all,
        )


ContextGroups = Dict[Context, List[Tuple[Trajectory, List[CutPoint]]]]


def select_cuts(cuts: Sequence[CutPoint], include_trip_end: bool) -> List[CutPoint]:
    return [c for c in cuts if include_trip_end or not c.is_trip_end]


def group_by_context(
    trajs: Sequence[Trajectory],
    cuts_by_traj: Dict[str, List[CutPoint]],
    tz: ZoneInfo,
    include_trip_end: bool = False,
) -> ContextGroups:
    """
    Bucket each trajectory's cutting points by the trajectory's context.

    Cuts of trajectories missing from trajs are skipped with a warning.
    """
    by_id = {t.id: t for t in trajs}
    for tid in sorted(set(cuts_by_traj) - set(by_id)):
        logger.warning(f"cuts for unknown trajectory '{tid}' skipped")

    groups: ContextGroups = {}
    for tid in sorted(set(cuts_by_traj) & set(by_id)):
        traj = by_id[tid]
        chosen = select_cuts(cuts_by_traj[tid], include_trip_end)
        groups.setdefault(assign_context(traj, tz), []).append((traj, chosen))
    return groups


def relevance_for_trajectory(
    item: Tuple[Trajectory, List[CutPoint]],
    db: EventDatabase,
    cfg: RunConfig,
    tz: Optional[ZoneInfo],
) -> List[CutRelevance]:
    """Physical and temporal relevancy of every cut of one trajectory."""
    traj, cuts = item
    th = cfg.describe.th_m
    overlap = cfg.describe.temporal_strategy == "overlap"
    evidences: List[CongestionEvidence] = []
    if cuts and not overlap:
        if tz is None:
            raise ConfigError("temporal relevancy needs a dataset timezone")
        evidences = find_congestion_evidence(traj, db, cfg.evidence, tz)

    out = []
    for cut in cuts:
        p = cut.latlng
        if overlap:
            temporal = check_relevancy_overlap(
                p, db, (traj.t_start, traj.t_end), th, cfg.evidence.congestion_subtypes
            )
        else:
            temporal = check_relevancy_temporal(p, evidences, th)
        out.append(
            CutRelevance(
                trajectory_id=traj.id,
                cut_index=cut.cut_index,
                lat=cut.lat,
                lng=cut.lng,
                physical=check_relevancy_physical(p, db, th),
                temporal=temporal,
            )
        )
    return out


def correlation(
    groups: ContextGroups,
    db: EventDatabase,
    mode: str = "all",
    cfg: Optional[RunConfig] = None,
    tz: Optional[ZoneInfo] = None,
    jobs: int = 1,
) -> List[ContextReport]:
    """
    Correlation of cutting points with events for every context.

    All three correlations are computed; mode names the one callers treat as
    primary (ContextReport.value). Contexts with fewer than
    cfg.describe.min_cuts cutting points are left out with a warning.

    Returns:
        Reports sorted by (route, day type, period)
    """
    if mode not in MODES:
        raise ConfigError(f"correlation mode must be one of {', '.join(MODES)}, got '{mode}'")
    cfg = cfg or RunConfig()

    ordered = sorted(groups, key=lambda c: (c.route_id, c.day_type.value, c.period.value))
    items = [
        (ctx, entry)
        for ctx in ordered
        for entry in sorted(groups[ctx], key=lambda e: e[0].id)
    ]
    per_traj = run_parallel(
        partial(relevance_for_trajectory, db=db, cfg=cfg, tz=tz),
        [entry for _, entry in items],
        jobs,
    )

    collected: Dict[Context, List[CutRelevance]] = {ctx: [] for ctx in ordered}
    for (ctx, _), relevance in zip(items, per_traj):
        collected[ctx].extend(relevance)

    reports = []
    for ctx in ordered:
        cuts = collected[ctx]
        n = len(cuts)
        if n < cfg.describe.min_cuts:
            logger.warning(
                f"context {ctx.route_id}/{ctx.day_type.value}/{ctx.period.value} "
                f"skipped: {n} cutting points < min_cuts {cfg.describe.min_cuts}"
            )
            continue
        reports.append(
            ContextReport(
                context=ctx,
                n_trajectories=len(groups[ctx]),
                n_cutting_points=n,
                correlation_physical=sum(c.physical for c in cuts) / n,
                correlation_temporal=sum(c.temporal for c in cuts) / n,
                correlation_all=sum(c.relevant for c in cuts) / n,
                cuts=tuple(cuts),
            )
        )
    return reports


def summarize_routes(
    trajs: Sequence[Trajectory],
    cuts_by_traj: Dict[str, List[CutPoint]],
) -> List[Dict]:
    """Per route: trajectory count, mean duration (s) and mean segment count."""
    routes: Dict[str, List[Trajectory]] = {}
    for traj in trajs:
        if traj.id in cuts_by_traj:
            routes.setdefault(traj.route_id, []).append(traj)
    summary = []
    for route in sorted(routes):
        members = routes[route]
        summary.append(
            {
                "route": route,
                "n_traj": len(members),
                "avg_duration_s": float(np.mean([t.duration for t in members])),
                "avg_segments": float(np.mean([len(cuts_by_traj[t.id]) for t in members])),
            }
        )
    return summary


def write_report_csv(path: str, reports: Iterable[ContextReport], echo: Optional[dict] = None) -> int:
    return csvio.write_table(path, REPORT_COLUMNS, [r.row() for r in reports], echo)


def report_json(
    reports: Sequence[ContextReport],
    mode: str,
    routes: Sequence[Dict],
    db: EventDatabase,
    tz: Optional[ZoneInfo],
    echo: Dict,
    subtypes: Sequence[str] = ("congestion",),
) -> Dict:
    """JSON variant of the report with per-cut detail and dataset summaries."""
    payload = {
        "config": echo,
        "mode": mode,
        "contexts": [
            {
                **dict(zip(REPORT_COLUMNS, r.row())),
                "correlation": r.value(mode),
                "cuts": [c.as_dict() for c in r.cuts],
            }
            for r in reports
        ],
        "routes": list(routes),
        "event_sources": db.source_counts(),
    }
    if tz is not None:
        payload["congestion_histogram"] = congestion_histogram(db, tz, subtypes).tolist()
    return payload
