"""
Event database: physical facts and temporal-physical events.

Physical facts (traffic signals, exits, bridges) have a location only.
Temporal-physical events (congestion reports) also carry a time interval.
The database keeps a ~200 m lat/lng grid for spatial pre-filtering and an
interval index (starts sorted, with a running maximum of ends) for temporal
lookups. Every spatial answer is verified with the exact haversine distance.
"""

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

from . import csvio
from .config import EvidenceConfig
from .errors import DataError, SchemaError
from .trajectory import EARTH_RADIUS_M, LatLng, Trajectory, haversine_many

logger = logging.getLogger(__name__)

# grid cell edge in degrees (~200 m of latitude)
CELL_DEG = 0.002

EVENT_COLUMNS = ("source", "type", "subtype", "lat", "lng", "t_start", "t_end")


class EventKind(str, Enum):
    PHYSICAL_FACT = "physical_fact"
    TEMPORAL_PHYSICAL = "temporal_physical"


@dataclass(frozen=True)
class Event:
    """
    A located event.

    Attributes:
        lat, lng: Location in degrees
        kind: Physical fact or temporal-physical event
        subtype: Free text, e.g. "traffic_signal" or "congestion"
        source: Where the record came from (osm, hca, bing, mapquest, ...)
        t_start, t_end: UTC epoch seconds, temporal-physical events only
    """
    lat: float
    lng: float
    kind: EventKind
    subtype: str
    source: str
    t_start: Optional[float] = None
    t_end: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        problem = event_problem(self.lat, self.lng, self.kind, self.t_start, self.t_end)
        if problem:
            raise DataError(problem)

    @property
    def latlng(self) -> LatLng:
        return (self.lat, self.lng)

    @property
    def is_temporal(self) -> bool:
        return self.kind is EventKind.TEMPORAL_PHYSICAL


def event_problem(
    lat: float,
    lng: float,
    kind: EventKind,
    t_start: Optional[float],
    t_end: Optional[float],
) -> Optional[str]:
    """Return why an event is invalid, or None if it is valid."""
    if not (math.isfinite(lat) and math.isfinite(lng)):
        return "lat/lng is not a finite number"
    if not -90.0 <= lat <= 90.0 or not -180.0 <= lng <= 180.0:
        return f"location ({lat}, {lng}) out of range"
    if kind is EventKind.TEMPORAL_PHYSICAL:
        if t_start is None or t_end is None:
            return "temporal_physical event without t_start/t_end"
        if t_end < t_start:
            return "t_end before t_start"
    elif t_start is not None or t_end is not None:
        return "physical_fact with timestamps"
    return None


@dataclass(frozen=True)
class EventFilter:
    """Restrict queries by kind, subtype and source (None means any)."""
    kind: Optional[EventKind] = None
    subtypes: Optional[Tuple[str, ...]] = None
    sources: Optional[Tuple[str, ...]] = None

    def matches(self, event: Event) -> bool:
        if self.kind is not None and event.kind is not self.kind:
            return False
        if self.subtypes is not None and event.subtype not in self.subtypes:
            return False
        if self.sources is not None and event.source not in self.sources:
            return False
        return True


PHYSICAL = EventFilter(kind=EventKind.PHYSICAL_FACT)


def cell_of(lat: float, lng: float) -> Tuple[int, int]:
    return (math.floor(lat / CELL_DEG), math.floor(lng / CELL_DEG))


class EventDatabase:
    """
    Immutable, indexed collection of events.

    Built once; concurrent queries need no locking.
    """

    def __init__(self, events: Iterable[Event] = ()):
        self.events: Tuple[Event, ...] = tuple(events)
        self._lats = np.array([e.lat for e in self.events], dtype=np.float64)
        self._lngs = np.array([e.lng for e in self.events], dtype=np.float64)

        self.cells: Dict[Tuple[int, int], List[int]] = {}
        for i, event in enumerate(self.events):
            self.cells.setdefault(cell_of(event.lat, event.lng), []).append(i)

        # temporal events ordered by start; _reach[j] = max end over the first j+1
        temporal = [i for i, e in enumerate(self.events) if e.is_temporal]
        starts = np.array([self.events[i].t_start for i in temporal], dtype=np.float64)
        ends = np.array([self.events[i].t_end for i in temporal], dtype=np.float64)
        order = np.argsort(starts, kind="stable")
        self._by_start = np.asarray(temporal, dtype=np.int64)[order]
        self._starts = starts[order]
        self._ends = ends[order]
        self._reach = np.maximum.accumulate(self._ends) if len(order) else self._ends

    def __len__(self) -> int:
        return len(self.events)

    def source_counts(self) -> Dict[str, int]:
        """Number of events per source, sorted by source name."""
        return dict(sorted(Counter(e.source for e in self.events).items()))

    def kind_counts(self) -> Dict[str, int]:
        return dict(sorted(Counter(e.kind.value for e in self.events).items()))

    def candidate_indexes(self, p: LatLng, radius_m: float) -> Optional[List[int]]:
        """
        Indexes from every grid cell that can hold a point within radius_m of p.

        Returns None when the search window touches a pole or the antimeridian,
        in which case the caller scans everything.
        """
        delta = radius_m / EARTH_RADIUS_M
        lat0 = math.radians(p[0])
        lat_lo = math.degrees(lat0 - delta)
        lat_hi = math.degrees(lat0 + delta)
        if lat_lo <= -90.0 or lat_hi >= 90.0 or math.cos(lat0) <= math.sin(delta):
            return None
        dlng = math.degrees(math.asin(math.sin(delta) / math.cos(lat0)))
        lng_lo = p[1] - dlng
        lng_hi = p[1] + dlng
        if lng_lo <= -180.0 or lng_hi >= 180.0:
            return None

        eps = 1e-9
        row_lo, col_lo = cell_of(lat_lo - eps, lng_lo - eps)
        row_hi, col_hi = cell_of(lat_hi + eps, lng_hi + eps)
        if (row_hi - row_lo + 1) * (col_hi - col_lo + 1) > len(self.cells):
            return None
        found: List[int] = []
        for row in range(row_lo, row_hi + 1):
            for col in range(col_lo, col_hi + 1):
                found.extend(self.cells.get((row, col), ()))
        found.sort()
        return found

    def within(self, p: LatLng, radius_m: float, flt: Optional[EventFilter] = None) -> List[Event]:
        """Events with haversine(event, p) <= radius_m, in database order."""
        if radius_m < 0:
            raise ValueError(f"radius must be non-negative, got {radius_m}")
        if not self.events:
            return []
        candidates = self.candidate_indexes(p, radius_m)
        idx = np.arange(len(self.events)) if candidates is None else np.asarray(candidates, dtype=np.int64)
        if not len(idx):
            return []
        dist = haversine_many(p, self._lats[idx], self._lngs[idx])
        hits = [self.events[i] for i in idx[dist <= radius_m]]
        if flt is not None:
            hits = [e for e in hits if flt.matches(e)]
        return hits

    def active_indexes(self, t0: float, t1: float) -> np.ndarray:
        """Database indexes (ascending) of temporal events overlapping [t0, t1]."""
        hi = int(np.searchsorted(self._starts, t1, side="right"))
        lo = int(np.searchsorted(self._reach[:hi], t0, side="left"))
        window = slice(lo, hi)
        hit = self._ends[window] >= t0
        return np.sort(self._by_start[window][hit])

    def active_between(self, t0: float, t1: float, flt: Optional[EventFilter] = None) -> List[Event]:
        """Temporal events whose interval overlaps [t0, t1]."""
        hits = [self.events[i] for i in self.active_indexes(t0, t1)]
        if flt is not None:
            hits = [e for e in hits if flt.matches(e)]
        return hits

    def within_active(
        self,
        p: LatLng,
        radius_m: float,
        span: Tuple[float, float],
        flt: Optional[EventFilter] = None,
    ) -> List[Event]:
        """Temporal events within radius_m of p whose interval overlaps span."""
        if radius_m < 0:
            raise ValueError(f"radius must be non-negative, got {radius_m}")
        idx = self.active_indexes(*span)
        if not len(idx):
            return []
        dist = haversine_many(p, self._lats[idx], self._lngs[idx])
        hits = [self.events[i] for i in idx[dist <= radius_m]]
        if flt is not None:
            hits = [e for e in hits if flt.matches(e)]
        return hits


def nearby_events(
    db: EventDatabase,
    p: LatLng,
    radius_m: float,
    flt: Optional[EventFilter] = None,
) -> List[Event]:
    """All events within radius_m (inclusive) of p that match the filter."""
    return db.within(p, radius_m, flt)


def load_events(path: str, format: Optional[str] = None) -> EventDatabase:
    """
    Load events from CSV or a JSON array with the same field names.

    Invalid rows are skipped with a `line=<n> reason=<text>` warning (for JSON
    the "line" is the 1-based record number).

    Args:
        path: Events file
        format: "csv" or "json"; inferred from the extension when None

    Returns:
        Indexed EventDatabase
    """
    fmt = format or ("json" if Path(path).suffix.lower() == ".json" else "csv")
    if fmt == "csv":
        frame = csvio.read_table(path, ("type", "lat", "lng"), optional=("source", "subtype", "t_start", "t_end"))
    elif fmt == "json":
        frame = _json_frame(path)
    else:
        raise DataError(f"unsupported events format '{fmt}'")

    for col in ("source", "subtype", "t_start", "t_end"):
        if col not in frame.columns:
            frame[col] = ""

    lat = csvio.numeric(frame, "lat")
    lng = csvio.numeric(frame, "lng")
    t_start = csvio.parse_timestamps(frame["t_start"])
    t_end = csvio.parse_timestamps(frame["t_end"])
    has_start = (frame["t_start"].str.strip() != "").to_numpy()
    has_end = (frame["t_end"].str.strip() != "").to_numpy()
    lines = frame[csvio.LINE_COLUMN].to_numpy()

    events: List[Event] = []
    for i, raw_type in enumerate(frame["type"].str.strip().str.lower()):
        line = int(lines[i])
        try:
            kind = EventKind(raw_type)
        except ValueError:
            csvio.warn_row(line, f"unknown event type '{raw_type}'")
            continue
        if (has_start[i] and not math.isfinite(t_start[i])) or (has_end[i] and not math.isfinite(t_end[i])):
            csvio.warn_row(line, "unparseable timestamp")
            continue
        start = float(t_start[i]) if has_start[i] else None
        end = float(t_end[i]) if has_end[i] else None
        problem = event_problem(float(lat[i]), float(lng[i]), kind, start, end)
        if problem:
            csvio.warn_row(line, problem)
            continue
        events.append(
            Event(
                lat=float(lat[i]),
                lng=float(lng[i]),
                kind=kind,
                subtype=str(frame["subtype"].iat[i]).strip(),
                source=str(frame["source"].iat[i]).strip(),
                t_start=start,
                t_end=end,
            )
        )

    db = EventDatabase(events)
    for source, n in db.source_counts().items():
        logger.info(f"events source={source or '-'} count={n}")
    for kind, n in db.kind_counts().items():
        logger.info(f"events kind={kind} count={n}")
    return db


def _json_frame(path: str) -> pd.DataFrame:
    file_path = Path(path)
    if not file_path.exists():
        raise DataError(f"file not found: {path}")
    try:
        records = json.loads(file_path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(records, list):
        raise DataError(f"{path}: expected a JSON array of events")
    frame = pd.DataFrame.from_records(records, columns=list(EVENT_COLUMNS) if not records else None)
    missing = [c for c in ("type", "lat", "lng") if c not in frame.columns]
    if missing:
        raise SchemaError(path, missing)
    frame = frame.astype(object).where(frame.notna(), "").astype(str)
    frame[csvio.LINE_COLUMN] = np.arange(1, len(frame) + 1)
    return frame


def write_events(path: str, events: Iterable[Event], echo: Optional[dict] = None) -> int:
    """Write events in the ingestion CSV format (empty times for physical facts)."""
    rows = [
        (
            e.source,
            e.kind.value,
            e.subtype,
            e.lat,
            e.lng,
            "" if e.t_start is None else e.t_start,
            "" if e.t_end is None else e.t_end,
        )
        for e in events
    ]
    return csvio.write_table(path, EVENT_COLUMNS, rows, echo)


def local_dow_hour(t: float, tz: ZoneInfo) -> Tuple[int, int]:
    """(day of week with Monday = 0, hour of day) in local civil time."""
    local = datetime.fromtimestamp(t, tz)
    return (local.weekday(), local.hour)


@dataclass(frozen=True)
class CongestionEvidence:
    """
    A slow sub-trajectory corroborated by historical congestion reports.

    start_index and end_index are 1-based, inclusive point indexes.
    """
    trajectory_id: str
    start_index: int
    end_index: int
    centroid: LatLng
    dow_hour: Tuple[int, int]
    support_count: int

    @property
    def length(self) -> int:
        return self.end_index - self.start_index + 1


def slow_runs(speeds: Sequence[float], max_speed_kmh: float, min_run: int) -> List[Tuple[int, int]]:
    """Maximal runs (0-based, inclusive) of at least min_run speeds strictly below max_speed_kmh."""
    runs = []
    start = None
    for i, speed in enumerate(list(speeds) + [math.inf]):
        if speed < max_speed_kmh:
            if start is None:
                start = i
        elif start is not None:
            if i - start >= min_run:
                runs.append((start, i - 1))
            start = None
    return runs


def find_congestion_evidence(
    traj: Trajectory,
    db: EventDatabase,
    cfg: EvidenceConfig,
    tz: ZoneInfo,
) -> List[CongestionEvidence]:
    """
    Two-step congestion evidence detection.

    Step 1 finds maximal slow runs. Step 2 keeps a run when at least
    cfg.min_support congestion reports lie within cfg.radius_m of the run's
    centroid and started on the same local weekday and hour as the run.
    """
    congestion = EventFilter(
        kind=EventKind.TEMPORAL_PHYSICAL,
        subtypes=tuple(cfg.congestion_subtypes),
    )
    points = traj.points
    found = []
    for start, end in slow_runs([p.speed for p in points], cfg.max_speed_kmh, cfg.min_run):
        members = points[start:end + 1]
        centroid = (
            float(np.mean([p.lat for p in members])),
            float(np.mean([p.lng for p in members])),
        )
        when = local_dow_hour(members[0].t, tz)
        support = sum(
            1 for e in db.within(centroid, cfg.radius_m, congestion)
            if local_dow_hour(e.t_start, tz) == when
        )
        logger.debug(
            f"trajectory={traj.id} run={start + 1}-{end + 1} dow_hour={when} support={support}"
        )
        if support >= cfg.min_support:
            found.append(
                CongestionEvidence(
                    trajectory_id=traj.id,
                    start_index=start + 1,
                    end_index=end + 1,
                    centroid=centroid,
                    dow_hour=when,
                    support_count=support,
                )
            )
    return found


def congestion_histogram(
    db: EventDatabase,
    tz: ZoneInfo,
    subtypes: Sequence[str] = ("congestion",),
) -> np.ndarray:
    """7 x 24 counts of congestion reports by local weekday (Monday first) and start hour."""
    hist = np.zeros((7, 24), dtype=np.int64)
    for event in db.events:
        if event.is_temporal and event.subtype in subtypes:
            dow, hour = local_dow_hour(event.t_start, tz)
            hist[dow, hour] += 1
    return hist
