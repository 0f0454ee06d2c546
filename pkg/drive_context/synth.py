"""
Synthetic trajectory generator with planted regime changes.

A trajectory is stitched from regime blocks (cruise, stop, turn, ...). Speed
moves toward each regime's target at a bounded acceleration, heading turns at
the regime's rate, and positions are integrated from speed and heading on the
sphere, so the output is geographically consistent. Annotations sit at the
last point of every regime except the final one.
"""

import json
import logging
import tomllib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import RegimeSpecError
from .evaluation import Annotation, AnnotationSet
from .parallel import derive_seed
from .trajectory import LatLng, Trajectory, TrajectoryPoint, destination

logger = logging.getLogger(__name__)

MIN_REGIME_POINTS = 5
TIME_STEP_S = 1.0


@dataclass(frozen=True)
class RegimeSpec:
    """
    One driving regime.

    Attributes:
        name: Library key
        speed_kmh: Target speed
        heading_rate_dps: Heading change per second (positive turns right)
        duration: (min, max) number of points, min >= 5
        approach_accel_mps2: Largest speed change per second while approaching the target
    """
    name: str
    speed_kmh: float
    heading_rate_dps: float = 0.0
    duration: Tuple[int, int] = (20, 40)
    approach_accel_mps2: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "duration", tuple(int(d) for d in self.duration))
        lo, hi = self.duration
        if lo < MIN_REGIME_POINTS:
            raise RegimeSpecError(
                f"regime '{self.name}': minimum duration {lo} is shorter than {MIN_REGIME_POINTS} points"
            )
        if hi < lo:
            raise RegimeSpecError(f"regime '{self.name}': duration max {hi} < min {lo}")
        if self.speed_kmh < 0:
            raise RegimeSpecError(f"regime '{self.name}': negative target speed")
        if self.approach_accel_mps2 <= 0:
            raise RegimeSpecError(f"regime '{self.name}': approach acceleration must be > 0")


BUILTIN_REGIMES = (
    RegimeSpec("cruise-60", 60.0, duration=(90, 240)),
    RegimeSpec("cruise-100", 100.0, duration=(90, 240)),
    RegimeSpec("slow-30", 30.0, duration=(45, 120)),
    RegimeSpec("stop", 0.0, duration=(15, 45)),
    RegimeSpec("turn-left", 25.0, heading_rate_dps=-9.0, duration=(8, 12)),
    RegimeSpec("turn-right", 25.0, heading_rate_dps=9.0, duration=(8, 12)),
)


@dataclass(frozen=True)
class SynthSpec:
    """
    Generator settings.

    Attributes:
        regimes: Regime library
        sequence: Fixed regime order for every trajectory; random when None
        n_regimes: (min, max) regimes per trajectory for random sequences
        speed_noise_kmh, accel_noise_mps2, heading_noise_deg: Gaussian noise sigmas
        start: Mean start location
        start_jitter_m: Sigma of the per-trajectory start offset
        start_time: Epoch seconds of the first trajectory
        trip_spacing_s: Start time offset between consecutive trajectories
        route_id: Route written for every trajectory
    """
    regimes: Tuple[RegimeSpec, ...] = BUILTIN_REGIMES
    sequence: Optional[Tuple[str, ...]] = None
    n_regimes: Tuple[int, int] = (3, 6)
    speed_noise_kmh: float = 0.0
    accel_noise_mps2: float = 0.0
    heading_noise_deg: float = 0.0
    start: LatLng = (39.9612, -82.9988)
    start_jitter_m: float = 0.0
    start_time: float = 1614700800.0  # 2021-03-02 16:00 UTC
    trip_spacing_s: float = 5400.0
    route_id: str = "synthetic"

    def __post_init__(self):
        names = [r.name for r in self.regimes]
        if not names:
            raise RegimeSpecError("regime library is empty")
        if len(set(names)) != len(names):
            raise RegimeSpecError("duplicate regime names in library")
        if self.sequence is not None:
            unknown = [n for n in self.sequence if n not in names]
            if unknown:
                raise RegimeSpecError(f"unknown regime(s) in sequence: {', '.join(unknown)}")
            if not self.sequence:
                raise RegimeSpecError("sequence must name at least one regime")
        lo, hi = self.n_regimes
        if lo < 1 or hi < lo:
            raise RegimeSpecError(f"n_regimes must satisfy 1 <= min <= max, got {self.n_regimes}")
        for name in ("speed_noise_kmh", "accel_noise_mps2", "heading_noise_deg", "start_jitter_m"):
            if getattr(self, name) < 0:
                raise RegimeSpecError(f"{name} must be >= 0")

    def regime(self, name: str) -> RegimeSpec:
        for r in self.regimes:
            if r.name == name:
                return r
        raise RegimeSpecError(f"unknown regime '{name}'")


def default_synth_spec() -> SynthSpec:
    return SynthSpec()


def synth_spec_from_dict(data: Dict[str, Any]) -> SynthSpec:
    """
    Build a SynthSpec from plain data.

    Regimes listed under "regimes" replace built-ins of the same name and
    extend the library otherwise.
    """
    data = dict(data)
    library = {r.name: r for r in BUILTIN_REGIMES}
    for raw in data.pop("regimes", []):
        try:
            regime = RegimeSpec(**raw)
        except TypeError as e:
            raise RegimeSpecError(f"invalid regime entry {raw}: {e}") from e
        library[regime.name] = regime

    known = {"sequence", "n_regimes", "speed_noise_kmh", "accel_noise_mps2", "heading_noise_deg",
             "start", "start_jitter_m", "start_time", "trip_spacing_s", "route_id"}
    unknown = set(data) - known
    if unknown:
        raise RegimeSpecError(f"unknown synth key(s): {', '.join(sorted(unknown))}")
    for key in ("sequence", "n_regimes", "start"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    return SynthSpec(regimes=tuple(library.values()), **data)


def load_synth_spec(path: Optional[str]) -> SynthSpec:
    """Read a synth spec from TOML or JSON; None gives the default spec."""
    if path is None:
        return default_synth_spec()
    spec_path = Path(path)
    if not spec_path.exists():
        raise RegimeSpecError(f"synth spec not found: {path}")
    try:
        if spec_path.suffix == ".json":
            data = json.loads(spec_path.read_text())
        else:
            data = tomllib.loads(spec_path.read_text())
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise RegimeSpecError(f"failed to parse synth spec {path}: {e}") from e
    return synth_spec_from_dict(data.get("synth", data))


def _pick_sequence(spec: SynthSpec, rng: np.random.Generator) -> List[RegimeSpec]:
    if spec.sequence is not None:
        return [spec.regime(n) for n in spec.sequence]
    lo, hi = spec.n_regimes
    count = int(rng.integers(lo, hi + 1))
    chosen: List[RegimeSpec] = []
    for _ in range(count):
        pool = [r for r in spec.regimes if not chosen or r.name != chosen[-1].name] or list(spec.regimes)
        chosen.append(pool[int(rng.integers(len(pool)))])
    return chosen


def generate_trajectory(
    trajectory_id: str,
    spec: SynthSpec,
    seed: int,
    t0: float,
) -> Tuple[Trajectory, AnnotationSet]:
    """Generate one trajectory and its regime-boundary annotations."""
    rng = np.random.default_rng(seed)
    regimes = _pick_sequence(spec, rng)
    durations = [int(rng.integers(r.duration[0], r.duration[1] + 1)) for r in regimes]

    position = spec.start
    if spec.start_jitter_m > 0:
        position = destination(position, float(rng.uniform(0, 360)), abs(float(rng.normal(0, spec.start_jitter_m))))
    heading = float(rng.uniform(0, 360))
    speed = regimes[0].speed_kmh

    true_states = []  # (position, speed, accel, heading)
    boundaries = []
    step = 0
    for regime, duration in zip(regimes, durations):
        max_dv = regime.approach_accel_mps2 * 3.6 * TIME_STEP_S
        for _ in range(duration):
            if step == 0:
                accel = 0.0
            else:
                dv = float(np.clip(regime.speed_kmh - speed, -max_dv, max_dv))
                speed += dv
                accel = dv / 3.6 / TIME_STEP_S
                heading = (heading + regime.heading_rate_dps * TIME_STEP_S) % 360.0
                position = destination(position, heading, speed / 3.6 * TIME_STEP_S)
            true_states.append((position, speed, accel, heading))
            step += 1
        boundaries.append(step)

    n = len(true_states)
    speed_noise = rng.normal(0.0, spec.speed_noise_kmh, n) if spec.speed_noise_kmh else np.zeros(n)
    accel_noise = rng.normal(0.0, spec.accel_noise_mps2, n) if spec.accel_noise_mps2 else np.zeros(n)
    heading_noise = rng.normal(0.0, spec.heading_noise_deg, n) if spec.heading_noise_deg else np.zeros(n)

    points = []
    for i, ((lat, lng), v, a, h) in enumerate(true_states):
        points.append(
            TrajectoryPoint(
                t=t0 + i * TIME_STEP_S,
                lat=lat,
                lng=lng,
                speed=max(0.0, v + float(speed_noise[i])),
                accel=a + float(accel_noise[i]),
                heading=(h + float(heading_noise[i])) % 360.0,
            )
        )

    annotations = tuple(
        Annotation(b, points[b - 1].lat, points[b - 1].lng) for b in boundaries[:-1]
    )
    traj = Trajectory(id=trajectory_id, points=tuple(points), route_id=spec.route_id)
    return traj, AnnotationSet(trajectory_id, annotations)


def generate_synthetic(
    n_trajs: int,
    spec: Optional[SynthSpec] = None,
    seed: int = 0,
) -> Tuple[List[Trajectory], List[AnnotationSet]]:
    """
    Generate a seeded corpus with planted regime changes.

    Each trajectory draws from its own seed derived from (seed, index), so the
    corpus is bit-identical for a given seed.

    Returns:
        (trajectories, annotation sets), both sorted by trajectory id
    """
    if n_trajs < 0:
        raise RegimeSpecError(f"n_trajs must be >= 0, got {n_trajs}")
    spec = spec or default_synth_spec()
    width = max(4, len(str(n_trajs)))
    trajs, ants = [], []
    for i in range(n_trajs):
        tid = f"syn-{i:0{width}d}"
        traj, ann = generate_trajectory(
            tid,
            spec,
            derive_seed(seed, f"synth:{tid}"),
            spec.start_time + i * spec.trip_spacing_s,
        )
        trajs.append(traj)
        ants.append(ann)
    logger.info(f"generated {n_trajs} synthetic trajectories")
    return trajs, ants


def with_sequence(spec: SynthSpec, names: Sequence[str], duration: Optional[Tuple[int, int]] = None) -> SynthSpec:
    """Copy of spec with a fixed regime order, optionally forcing every regime's duration."""
    regimes = spec.regimes
    if duration is not None:
        regimes = tuple(replace(r, duration=duration) for r in regimes)
    return replace(spec, regimes=regimes, sequence=tuple(names))
