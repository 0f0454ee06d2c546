"""
Precision/recall evaluation of segmentation algorithms against annotations.

Each cutting point is matched, in trajectory order, to the nearest annotation
still available within the distance threshold; a matched annotation is used
up. With m cuts, n annotations and |M| matches:

    precision = |M| / m        recall = |M| / n

Curves average per-trajectory values (unweighted mean).
"""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import csvio
from .config import RunConfig
from .errors import ConfigError, DataError, DegenerateTrajectoryError
from .markov import MarkovModel
from .parallel import derive_seed, run_parallel
from .segmentation import CutPoint
from .segmenters.base import SegmentRequest
from .segmenters.registry import default_registry
from .trajectory import LatLng, Trajectory, haversine_many

logger = logging.getLogger(__name__)

ANNOTATION_COLUMNS = ("trajectory_id", "point_index", "lat", "lng")
PR_COLUMNS = ("algorithm", "threshold_m", "precision", "recall")
REGIMES = ("easy", "strict")
DEFAULT_REGIME = "easy"


@dataclass(frozen=True)
class Annotation:
    point_index: int
    lat: float
    lng: float

    @property
    def latlng(self) -> LatLng:
        return (self.lat, self.lng)


@dataclass(frozen=True)
class AnnotationSet:
    """Ground-truth segment borders of one trajectory under one regime."""
    trajectory_id: str
    annotations: Tuple[Annotation, ...]
    regime: str = DEFAULT_REGIME

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        idx = [a.point_index for a in self.annotations]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DataError(f"annotations of '{self.trajectory_id}' are not strictly increasing")
        if self.regime not in REGIMES:
            raise DataError(f"unknown annotation regime '{self.regime}'")

    def __len__(self) -> int:
        return len(self.annotations)

    def check_bounds(self, n_points: int) -> None:
        for a in self.annotations:
            if not 1 <= a.point_index <= n_points:
                raise DataError(
                    f"annotation index {a.point_index} outside trajectory '{self.trajectory_id}' "
                    f"of {n_points} points"
                )


@dataclass(frozen=True)
class MatchResult:
    """
    Outcome of matching one trajectory's cuts against its annotations.

    Attributes:
        precision: |matches| / m, 0 when there are no cuts (no_cuts set)
        recall: |matches| / n, 0 when there are no annotations (no_annotations set)
        matches: (cut position, annotation position) pairs, 0-based into the inputs
    """
    precision: float
    recall: float
    matches: Tuple[Tuple[int, int], ...]
    no_cuts: bool = False
    no_annotations: bool = False


def match_and_score(
    cuts: Sequence[CutPoint],
    ants: AnnotationSet,
    th: float,
) -> MatchResult:
    """
    Greedy nearest-available matching within th meters.

    Cuts are processed in the given (trajectory) order. Among annotations at
    the same distance the earlier one wins.
    """
    m, n = len(cuts), len(ants)
    matches: List[Tuple[int, int]] = []
    if m and n:
        lats = np.array([a.lat for a in ants.annotations])
        lngs = np.array([a.lng for a in ants.annotations])
        available = np.ones(n, dtype=bool)
        for i, cut in enumerate(cuts):
            if not available.any():
                break
            dist = haversine_many(cut.latlng, lats, lngs)
            dist[~available] = np.inf
            j = int(np.argmin(dist))
            if dist[j] <= th:
                matches.append((i, j))
                available[j] = False

    return MatchResult(
        precision=len(matches) / m if m else 0.0,
        recall=len(matches) / n if n else 0.0,
        matches=tuple(matches),
        no_cuts=(m == 0),
        no_annotations=(n == 0),
    )


@dataclass(frozen=True)
class PrCurve:
    """Mean precision and recall of one algorithm at each threshold."""
    algorithm: str
    thresholds: Tuple[float, ...]
    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    n_trajectories: int = 0

    def rows(self) -> List[Tuple]:
        return [
            (self.algorithm, th, p, r)
            for th, p, r in zip(self.thresholds, self.precision, self.recall)
        ]

    def at(self, threshold: float) -> Tuple[float, float]:
        i = self.thresholds.index(threshold)
        return (self.precision[i], self.recall[i])


def eta_for(regime: str, cfg: RunConfig, ants: Optional[AnnotationSet] = None) -> int:
    """
    Segment count handed to the fixed-count baselines.

    With evaluate.eta_from_annotations and an annotation set, each trajectory
    gets one segment more than it has annotated borders.
    """
    if cfg.evaluate.eta_from_annotations and ants is not None:
        return len(ants) + 1
    if cfg.evaluate.eta is not None:
        return cfg.evaluate.eta
    return cfg.evaluate.eta_strict if regime == "strict" else cfg.evaluate.eta_easy


def _score_trajectory(
    item: Tuple[str, Trajectory, AnnotationSet, int],
    cfg: RunConfig,
    model: Optional[MarkovModel],
) -> List[Tuple[float, float]]:
    algorithm, traj, ants, eta = item
    _, execute = default_registry().get(algorithm)
    if eta > len(traj):
        logger.warning(f"trajectory={traj.id} eta {eta} clamped to {len(traj)} points")
    request = SegmentRequest(
        eta=min(eta, len(traj)),
        seed=derive_seed(cfg.seed, f"{algorithm}:{traj.id}"),
        config=cfg,
        model=model,
    )
    try:
        segmentation = execute(traj, request)
    except DegenerateTrajectoryError as e:
        # scored as no cuts so the trajectory still counts in the mean
        logger.warning(f"skipping trajectory: {e}")
        return [(0.0, 0.0)] * len(cfg.evaluate.thresholds_m)
    cuts = [c for c in segmentation.cut_points if cfg.evaluate.include_trip_end or not c.is_trip_end]
    scores = []
    for th in cfg.evaluate.thresholds_m:
        result = match_and_score(cuts, ants, th)
        scores.append((result.precision, result.recall))
    return scores


def evaluate(
    algorithms: Sequence[str],
    trajs: Sequence[Trajectory],
    ants: Sequence[AnnotationSet],
    cfg: Optional[RunConfig] = None,
    model: Optional[MarkovModel] = None,
    jobs: int = 1,
) -> List[PrCurve]:
    """
    Precision/recall curves for every algorithm (and annotation regime).

    Args:
        algorithms: Registered algorithm names
        trajs: Trajectories to segment; one that is too short to segment
            scores zero precision and recall
        ants: Annotation sets; trajectories without one are not scored
        cfg: Thresholds, eta defaults, seed and algorithm settings
        model: Markov model, required when dsegment is requested
        jobs: Worker processes

    Returns:
        One curve per (algorithm, regime), labelled `<algorithm>` when a single
        regime is present and `<algorithm>@<regime>` otherwise
    """
    cfg = cfg or RunConfig()
    registry = default_registry()
    registry.resolve(list(algorithms))
    if registry.needs_model(list(algorithms)) and model is None:
        raise ConfigError("dsegment evaluation needs a Markov model (pass --model)")

    by_id = {t.id: t for t in trajs}
    by_regime: Dict[str, List[AnnotationSet]] = {}
    for ant in ants:
        if ant.trajectory_id not in by_id:
            logger.warning(f"annotations for unknown trajectory '{ant.trajectory_id}' skipped")
            continue
        ant.check_bounds(len(by_id[ant.trajectory_id]))
        by_regime.setdefault(ant.regime, []).append(ant)

    regimes = sorted(by_regime)
    curves = []
    for regime in regimes:
        sets = sorted(by_regime[regime], key=lambda a: a.trajectory_id)
        eta = "per-annotation" if cfg.evaluate.eta_from_annotations else eta_for(regime, cfg)
        for algorithm in algorithms:
            items = [(algorithm, by_id[a.trajectory_id], a, eta_for(regime, cfg, a)) for a in sets]
            per_traj = run_parallel(
                partial(_score_trajectory, cfg=cfg, model=model),
                items,
                jobs,
            )
            if items:
                mean = np.array(per_traj, dtype=np.float64).mean(axis=0)
            else:
                mean = np.zeros((len(cfg.evaluate.thresholds_m), 2))
            label = algorithm if len(regimes) == 1 else f"{algorithm}@{regime}"
            curves.append(
                PrCurve(
                    algorithm=label,
                    thresholds=tuple(cfg.evaluate.thresholds_m),
                    precision=tuple(float(v) for v in mean[:, 0]),
                    recall=tuple(float(v) for v in mean[:, 1]),
                    n_trajectories=len(items),
                )
            )
            logger.info(f"algorithm={label} trajectories={len(items)} eta={eta}")
    return curves


def load_annotations(path: str) -> List[AnnotationSet]:
    """
    Read `trajectory_id,point_index,lat,lng[,regime]`.

    Rows without a regime belong to the easy regime.

    Returns:
        Annotation sets sorted by (regime, trajectory id)
    """
    frame = csvio.read_table(path, ANNOTATION_COLUMNS, optional=("regime",))
    idx = csvio.numeric(frame, "point_index")
    lat = csvio.numeric(frame, "lat")
    lng = csvio.numeric(frame, "lng")
    lines = frame[csvio.LINE_COLUMN].to_numpy()
    regimes = (
        frame["regime"].str.strip().str.lower().replace("", DEFAULT_REGIME).to_numpy()
        if "regime" in frame.columns
        else [DEFAULT_REGIME] * len(frame)
    )

    grouped: Dict[Tuple[str, str], List[Annotation]] = {}
    for i, tid in enumerate(frame["trajectory_id"].str.strip()):
        line = int(lines[i])
        if not np.isfinite([idx[i], lat[i], lng[i]]).all():
            csvio.warn_row(line, "non-numeric annotation field")
            continue
        if regimes[i] not in REGIMES:
            csvio.warn_row(line, f"unknown regime '{regimes[i]}'")
            continue
        grouped.setdefault((regimes[i], tid), []).append(
            Annotation(int(idx[i]), float(lat[i]), float(lng[i]))
        )

    return [
        AnnotationSet(tid, tuple(sorted(anns, key=lambda a: a.point_index)), regime)
        for (regime, tid), anns in sorted(grouped.items())
    ]


def write_annotations(path: str, sets: Iterable[AnnotationSet], echo: Optional[dict] = None) -> int:
    rows = [
        (s.trajectory_id, a.point_index, a.lat, a.lng, s.regime)
        for s in sorted(sets, key=lambda s: (s.regime, s.trajectory_id))
        for a in s.annotations
    ]
    return csvio.write_table(path, list(ANNOTATION_COLUMNS) + ["regime"], rows, echo)


def write_pr_csv(path: str, curves: Iterable[PrCurve], echo: Optional[dict] = None) -> int:
    rows = [row for curve in curves for row in curve.rows()]
    return csvio.write_table(path, PR_COLUMNS, rows, echo)
