"""
Trajectory data model, CSV ingestion and preprocessing.

A trajectory is one trip: GPS fixes with speed, acceleration and heading.
Preprocessing drops implausible fixes, replaces absolute heading with the
change of heading and rounds every kinematic value onto the quantization grid.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from . import csvio
from .config import TRAJECTORY_COLUMNS, QuantizationConfig
from .errors import DataError, DegenerateTrajectoryError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_ROUTE = "all"

LatLng = Tuple[float, float]


@dataclass(frozen=True, slots=True)
class TrajectoryPoint:
    """Vehicle status at time t (speed km/h, accel m/s², heading degrees)."""
    t: float
    lat: float
    lng: float
    speed: float
    accel: float
    heading: float

    def __post_init__(self):
        problem = point_problem(self.lat, self.lng, self.speed, self.heading)
        if problem:
            raise DataError(problem)
        if self.heading >= 360.0 or self.heading < 0.0:
            object.__setattr__(self, "heading", self.heading % 360.0)

    @property
    def latlng(self) -> LatLng:
        return (self.lat, self.lng)


@dataclass(frozen=True)
class Trajectory:
    """An ordered trip; timestamps strictly increase."""
    id: str
    points: Tuple[TrajectoryPoint, ...]
    route_id: str = DEFAULT_ROUTE

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        for prev, cur in zip(self.points, self.points[1:]):
            if not cur.t > prev.t:
                raise DataError(
                    f"trajectory '{self.id}': timestamps not strictly increasing at t={cur.t}"
                )

    def __len__(self) -> int:
        return len(self.points)

    @property
    def t_start(self) -> float:
        return self.points[0].t

    @property
    def t_end(self) -> float:
        return self.points[-1].t

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start if self.points else 0.0


@dataclass(frozen=True, slots=True)
class PreprocessedPoint:
    """A cleaned point with quantized speed, acceleration and change of heading."""
    base: TrajectoryPoint
    speed_q: float
    accel_q: float
    dheading_q: float

    @property
    def triple(self) -> Tuple[float, float, float]:
        return (self.speed_q, self.accel_q, self.dheading_q)


def point_problem(lat: float, lng: float, speed: float, heading: float) -> Optional[str]:
    """Return why a point is invalid, or None if it is valid."""
    for name, value in (("lat", lat), ("lng", lng), ("speed", speed), ("heading", heading)):
        if value is None or not math.isfinite(value):
            return f"{name} is not a finite number"
    if not -90.0 <= lat <= 90.0:
        return f"lat {lat} out of range [-90, 90]"
    if not -180.0 <= lng <= 180.0:
        return f"lng {lng} out of range [-180, 180]"
    if speed < 0:
        return f"speed {speed} is negative"
    return None


def haversine(a: LatLng, b: LatLng) -> float:
    """
    Great-circle distance in meters between two (lat, lng) pairs.

    Uses a spherical earth of radius 6,371,000 m.
    """
    lat1, lng1 = math.radians(a[0]), math.radians(a[1])
    lat2, lng2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlng = lng2 - lng1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlng / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_many(origin: LatLng, lats: np.ndarray, lngs: np.ndarray) -> np.ndarray:
    """Vectorised haversine from one origin to arrays of coordinates (meters)."""
    lat1 = math.radians(origin[0])
    lng1 = math.radians(origin[1])
    lat2 = np.radians(np.asarray(lats, dtype=np.float64))
    lng2 = np.radians(np.asarray(lngs, dtype=np.float64))
    h = np.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * np.cos(lat2) * np.sin((lng2 - lng1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def destination(origin: LatLng, bearing_deg: float, distance_m: float) -> LatLng:
    """Point reached from origin after distance_m along an initial bearing."""
    lat1 = math.radians(origin[0])
    lng1 = math.radians(origin[1])
    theta = math.radians(bearing_deg)
    delta = distance_m / EARTH_RADIUS_M
    lat2 = math.asin(
        math.sin(lat1) * math.cos(delta) + math.cos(lat1) * math.sin(delta) * math.cos(theta)
    )
    lng2 = lng1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(lat1),
        math.cos(delta) - math.sin(lat1) * math.sin(lat2),
    )
    lng_deg = (math.degrees(lng2) + 540.0) % 360.0 - 180.0
    return (math.degrees(lat2), lng_deg)


def quantize(value: float, step: float) -> float:
    """
    Round to the nearest multiple of step, ties toward zero.

    Symmetric values therefore quantize symmetrically (-2.5 -> -2, 2.5 -> 2 steps).
    """
    q = value / step
    n = math.ceil(abs(q) - 0.5)
    n = n if q >= 0 else -n
    result = n * step
    return result + 0.0  # normalise -0.0


def wrap_degrees(delta: float) -> float:
    """Wrap an angle difference into [-180, 180)."""
    return (delta + 180.0) % 360.0 - 180.0


def quantize_dheading(dheading: float, step: float) -> float:
    """Quantize a change of heading and keep it inside [-180, 180)."""
    q = quantize(wrap_degrees(dheading), step)
    if q >= 180.0:
        q -= 360.0
    return q + 0.0


def clean(traj: Trajectory, max_speed_mps: float = 65.0) -> List[TrajectoryPoint]:
    """
    Drop noisy GPS fixes.

    A fix is dropped when the speed implied by the haversine distance to the last
    kept fix exceeds max_speed_mps, or when its time does not advance.
    """
    kept: List[TrajectoryPoint] = []
    for point in traj.points:
        if not kept:
            kept.append(point)
            continue
        prev = kept[-1]
        dt = point.t - prev.t
        if dt <= 0:
            logger.debug(f"trajectory={traj.id} t={point.t} dropped: non-positive dt")
            continue
        implied = haversine(prev.latlng, point.latlng) / dt
        if implied > max_speed_mps:
            logger.debug(f"trajectory={traj.id} t={point.t} dropped: implied speed {implied:.1f} m/s")
            continue
        kept.append(point)
    return kept


def preprocess(
    traj: Trajectory,
    cfg: QuantizationConfig,
    max_speed_mps: float = 65.0,
) -> List[PreprocessedPoint]:
    """
    Clean and quantize a trajectory.

    Change of heading is the circular difference to the previous cleaned point,
    wrapped into [-180, 180); the first point's change of heading is 0.

    Args:
        traj: Trajectory with at least 2 points
        cfg: Quantization grid
        max_speed_mps: Noise bound on implied speed

    Returns:
        One PreprocessedPoint per cleaned point
    """
    points = clean(traj, max_speed_mps)
    if len(points) < 2:
        raise DegenerateTrajectoryError(traj.id, len(points))

    out: List[PreprocessedPoint] = []
    prev_heading: Optional[float] = None
    for point in points:
        dheading = 0.0 if prev_heading is None else wrap_degrees(point.heading - prev_heading)
        prev_heading = point.heading
        out.append(
            PreprocessedPoint(
                base=point,
                speed_q=quantize(point.speed, cfg.speed_step),
                accel_q=quantize(point.accel, cfg.accel_step),
                dheading_q=quantize_dheading(dheading, cfg.dheading_step),
            )
        )
    return out


def load_trajectories(
    path: str,
    format: str = "csv",
    columns: Optional[Dict[str, str]] = None,
) -> List[Trajectory]:
    """
    Load trajectories from CSV.

    Rows are grouped by id. Rows of one id need not be contiguous, but they must
    already be in time order: loading does not sort, and a timestamp that does
    not exceed the previous row of the same id raises DataError naming the id
    and line. Invalid rows are skipped with a `line=<n> reason=<text>` warning.

    Args:
        path: CSV with id,timestamp,lat,lng,speed,accel,heading (+ optional route)
        format: Only "csv" is supported
        columns: Header mapping, canonical name -> name in the file

    Returns:
        Trajectories sorted by id
    """
    if format != "csv":
        raise DataError(f"unsupported trajectory format '{format}'")

    frame = csvio.read_table(path, TRAJECTORY_COLUMNS, optional=("route",), rename=columns)
    lines = frame[csvio.LINE_COLUMN].to_numpy()
    ids = frame["id"].str.strip().to_numpy()
    ts = csvio.parse_timestamps(frame["timestamp"])
    lat = csvio.numeric(frame, "lat")
    lng = csvio.numeric(frame, "lng")
    speed = csvio.numeric(frame, "speed")
    accel = csvio.numeric(frame, "accel")
    heading = csvio.numeric(frame, "heading")
    routes = frame["route"].str.strip().to_numpy() if "route" in frame.columns else None

    by_id: Dict[str, List[TrajectoryPoint]] = {}
    route_of: Dict[str, str] = {}
    for i in range(len(frame)):
        line = int(lines[i])
        if not ids[i]:
            csvio.warn_row(line, "empty id")
            continue
        if not math.isfinite(ts[i]):
            csvio.warn_row(line, "unparseable timestamp")
            continue
        if not math.isfinite(accel[i]):
            csvio.warn_row(line, "accel is not a finite number")
            continue
        problem = point_problem(lat[i], lng[i], speed[i], heading[i])
        if problem:
            csvio.warn_row(line, problem)
            continue

        points = by_id.setdefault(ids[i], [])
        if points and not ts[i] > points[-1].t:
            raise DataError(
                f"{path}: non-monotonic timestamps in trajectory '{ids[i]}' at line {line}"
            )
        points.append(
            TrajectoryPoint(
                t=float(ts[i]),
                lat=float(lat[i]),
                lng=float(lng[i]),
                speed=float(speed[i]),
                accel=float(accel[i]),
                heading=float(heading[i]),
            )
        )
        if routes is not None and routes[i]:
            route_of.setdefault(ids[i], routes[i])

    trajectories = [
        Trajectory(id=tid, points=tuple(pts), route_id=route_of.get(tid, DEFAULT_ROUTE))
        for tid, pts in sorted(by_id.items())
    ]
    logger.info(f"loaded {len(trajectories)} trajectories from {path}")
    return trajectories


def write_trajectories(
    path: str,
    trajectories: Iterable[Trajectory],
    echo: Optional[dict] = None,
) -> int:
    """Write trajectories in the ingestion CSV format (epoch seconds, route column)."""
    rows = []
    for traj in sorted(trajectories, key=lambda t: t.id):
        for p in traj.points:
            rows.append((traj.id, p.t, p.lat, p.lng, p.speed, p.accel, p.heading, traj.route_id))
    return csvio.write_table(path, list(TRAJECTORY_COLUMNS) + ["route"], rows, echo)
