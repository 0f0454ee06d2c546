"""
Optimal segmentation of PMD signals.

The signal is split into k contiguous segments minimising the total
within-segment squared deviation from the segment mean (piecewise-constant
least squares), solved exactly by dynamic programming. Among equal-cost
solutions the lexicographically smallest boundary sequence wins.

Index convention: signal step j (1-based) sits between points j and j+1, so a
boundary after step j becomes cutting index j+1. Cutting indexes are 1-based
point indexes and the last one is always |T|.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import csvio
from .config import ModelConfig, SegmentConfig
from .errors import DataError, InfeasibleSegmentationError
from .markov import MarkovModel
from .pmd import PmdSignal, transform
from .trajectory import Trajectory, TrajectoryPoint, preprocess

logger = logging.getLogger(__name__)

# relative slack under which two DP candidates count as equal cost
TIE_TOLERANCE = 1e-9

CUT_COLUMNS = ("trajectory_id", "cut_index", "lat", "lng", "t")


@dataclass(frozen=True)
class CutPoint:
    """A cutting point: the last point of a segment."""
    trajectory_id: str
    cut_index: int
    lat: float
    lng: float
    t: float
    is_trip_end: bool = False

    @property
    def latlng(self) -> Tuple[float, float]:
        return (self.lat, self.lng)


@dataclass(frozen=True)
class Segmentation:
    """
    Segmentation of one trajectory.

    Attributes:
        trajectory_id: Source trajectory
        cutting_indexes: Strictly increasing 1-based point indexes, last = |T|
        total_cost: Objective value (0 for heuristic baselines)
        cut_points: Points at the cutting indexes, when known
    """
    trajectory_id: str
    cutting_indexes: Tuple[int, ...]
    total_cost: float = 0.0
    cut_points: Tuple[CutPoint, ...] = field(default=(), compare=False)

    def __post_init__(self):
        cuts = tuple(int(c) for c in self.cutting_indexes)
        object.__setattr__(self, "cutting_indexes", cuts)
        if not cuts:
            raise ValueError("a segmentation needs at least one cutting index")
        if cuts[0] < 1 or any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"cutting indexes must be strictly increasing from 1: {cuts}")

    @property
    def k(self) -> int:
        return len(self.cutting_indexes)

    @property
    def n_points(self) -> int:
        return self.cutting_indexes[-1]

    def segment_lengths(self) -> List[int]:
        """Number of points in each segment."""
        bounds = (0,) + self.cutting_indexes
        return [b - a for a, b in zip(bounds, bounds[1:])]

    def check(self, min_len: int = 1, k_max: Optional[int] = None) -> "Segmentation":
        """Raise ValueError unless every segment has min_len points and k <= k_max."""
        short = [n for n in self.segment_lengths() if n < min_len]
        if short:
            raise ValueError(f"segment shorter than {min_len}: {short}")
        if k_max is not None and self.k > k_max:
            raise ValueError(f"k={self.k} exceeds K={k_max}")
        return self

    def with_points(self, points: Sequence[TrajectoryPoint]) -> "Segmentation":
        """Attach cut points taken from the segmented point sequence."""
        if len(points) != self.n_points:
            raise ValueError(f"segmentation covers {self.n_points} points, got {len(points)}")
        cut_points = tuple(
            CutPoint(
                trajectory_id=self.trajectory_id,
                cut_index=idx,
                lat=points[idx - 1].lat,
                lng=points[idx - 1].lng,
                t=points[idx - 1].t,
                is_trip_end=(idx == self.n_points),
            )
            for idx in self.cutting_indexes
        )
        return Segmentation(self.trajectory_id, self.cutting_indexes, self.total_cost, cut_points)


class _Prefix:
    """Prefix sums for O(1) segment costs over a centred signal."""

    def __init__(self, values: Sequence[float]):
        x = np.asarray(values, dtype=np.float64)
        if len(x):
            x = x - x.mean()
        self.n = len(x)
        self.s1 = np.concatenate(([0.0], np.cumsum(x)))
        self.s2 = np.concatenate(([0.0], np.cumsum(x * x)))

    def cost(self, a: int, b: int) -> float:
        """Squared deviation of values[a:b] from their mean."""
        s = self.s1[b] - self.s1[a]
        c = (self.s2[b] - self.s2[a]) - s * s / (b - a)
        return max(0.0, float(c))

    def costs_to(self, a: int, ends: np.ndarray) -> np.ndarray:
        """Vector of cost(a, b) for every b in ends."""
        s = self.s1[ends] - self.s1[a]
        c = (self.s2[ends] - self.s2[a]) - s * s / (ends - a)
        return np.maximum(c, 0.0)


def piecewise_cost(values: Sequence[float], ends: Sequence[int]) -> float:
    """
    Total cost of a segmentation given 0-based exclusive segment ends.

    Summed left to right; segment_dp reports its cost through this function.
    """
    prefix = _Prefix(values)
    total = 0.0
    start = 0
    for end in ends:
        total += prefix.cost(start, end)
        start = end
    return total


class _SuffixTable:
    """
    Suffix DP layers: layer j holds, for every start a, the best cost of
    splitting values[a:] into j segments of at least min_len values.
    """

    def __init__(self, values: Sequence[float], min_len: int):
        self.prefix = _Prefix(values)
        self.n = self.prefix.n
        self.min_len = min_len
        first = np.full(self.n + 1, np.inf)
        starts = np.arange(0, self.n - min_len + 1)
        if len(starts):
            first[starts] = [self.prefix.cost(a, self.n) for a in starts]
        self.layers = [None, first]

    def feasible(self, k: int) -> bool:
        return k >= 1 and k * self.min_len <= self.n

    def layer(self, k: int) -> np.ndarray:
        while len(self.layers) <= k:
            self._extend()
        return self.layers[k]

    def best(self, k: int) -> float:
        return float(self.layer(k)[0]) if self.feasible(k) else float("inf")

    def _extend(self) -> None:
        j = len(self.layers)
        prev = self.layers[j - 1]
        cur = np.full(self.n + 1, np.inf)
        m = self.min_len
        for a in range(0, self.n - j * m + 1):
            ends = np.arange(a + m, self.n - (j - 1) * m + 1)
            if not len(ends):
                continue
            cur[a] = np.min(self.prefix.costs_to(a, ends) + prev[ends])
        self.layers.append(cur)

    def boundaries(self, k: int) -> List[int]:
        """Lexicographically smallest optimal ends (0-based, exclusive)."""
        self.layer(k)
        ends = []
        a = 0
        m = self.min_len
        for j in range(k, 1, -1):
            candidates = np.arange(a + m, self.n - (j - 1) * m + 1)
            totals = self.prefix.costs_to(a, candidates) + self.layers[j - 1][candidates]
            best = np.min(totals)
            slack = TIE_TOLERANCE * max(1.0, abs(best))
            b = int(candidates[np.flatnonzero(totals <= best + slack)[0]])
            ends.append(b)
            a = b
        ends.append(self.n)
        return ends


def segment_dp(signal: PmdSignal, k: int, min_len: int = 5) -> Segmentation:
    """
    Optimal k-segmentation of a PMD signal.

    Args:
        signal: PMD signal of a trajectory with len(signal) + 1 points
        k: Number of segments (>= 1)
        min_len: Minimum segment length in signal steps

    Returns:
        Segmentation whose cutting indexes are point indexes

    Raises:
        InfeasibleSegmentationError: k * min_len > len(signal)
    """
    values = signal.values
    if k < 1 or k * min_len > len(values):
        raise InfeasibleSegmentationError(
            f"cannot split {len(values)} steps into {k} segments of at least {min_len}"
        )
    ends = _SuffixTable(values, min_len).boundaries(k)
    return Segmentation(
        trajectory_id=signal.trajectory_id,
        cutting_indexes=tuple(e + 1 for e in ends),
        total_cost=piecewise_cost(values, ends),
    )


def cost_table(signal: PmdSignal, k_max: int, min_len: int = 5) -> List[float]:
    """Optimal cost for k = 1..k_max (inf where infeasible)."""
    table = _SuffixTable(signal.values, min_len)
    return [table.best(k) for k in range(1, k_max + 1)]


def choose_k(signal: PmdSignal, min_len: int = 5, k_max: int = 1, theta: float = 0.02) -> int:
    """
    Pick the segment count by the elbow rule.

    Returns the smallest k in [1, k_max] whose improvement cost(k) - cost(k+1)
    falls below theta * cost(1). A structureless signal gives 1.
    """
    if k_max <= 1:
        return 1
    table = _SuffixTable(signal.values, min_len)
    if not table.feasible(1):
        return 1
    base = table.best(1)
    if base <= 0.0:
        return 1
    for k in range(1, k_max):
        if not table.feasible(k + 1):
            return k
        improvement = max(0.0, table.best(k) - table.best(k + 1))
        if improvement < theta * base:
            return k
    return k_max


def k_upper_bound(n_points: int, divisor: int = 5) -> int:
    """K = floor(N / divisor), at least 1."""
    return max(1, n_points // divisor)


def segment_trajectory(
    traj: Trajectory,
    model: MarkovModel,
    model_cfg: ModelConfig,
    cfg: SegmentConfig,
) -> Tuple[Segmentation, PmdSignal]:
    """
    dSegment: preprocess, transform to PMD, choose k, segment.

    Returns:
        (segmentation over the cleaned points with cut points attached, PMD signal)
    """
    points = preprocess(traj, model_cfg.quantization, model_cfg.max_noise_speed_mps)
    signal = transform(
        points,
        model,
        unknown_state=cfg.unknown_state,
        distance_scale=cfg.distance_scale,
        trajectory_id=traj.id,
    )
    n_points = len(points)
    k_max = k_upper_bound(n_points, cfg.k_divisor)

    if len(signal) < cfg.min_len:
        segmentation = Segmentation(
            trajectory_id=traj.id,
            cutting_indexes=(n_points,),
            total_cost=piecewise_cost(signal.values, [len(signal)]),
        )
    else:
        k = choose_k(signal, cfg.min_len, k_max, cfg.theta)
        segmentation = segment_dp(signal, k, cfg.min_len)

    logger.debug(f"trajectory={traj.id} points={n_points} K={k_max} k={segmentation.k}")
    return segmentation.with_points([p.base for p in points]), signal


def write_cuts(path: str, segmentations: Iterable[Segmentation], echo: Optional[dict] = None) -> int:
    """Export cutting points as `trajectory_id,cut_index,lat,lng,t`."""
    rows = []
    for seg in sorted(segmentations, key=lambda s: s.trajectory_id):
        if len(seg.cut_points) != seg.k:
            raise ValueError(f"segmentation of '{seg.trajectory_id}' has no cut points attached")
        for cp in seg.cut_points:
            rows.append((cp.trajectory_id, cp.cut_index, cp.lat, cp.lng, cp.t))
    return csvio.write_table(path, CUT_COLUMNS, rows, echo)


def load_cuts(path: str) -> Dict[str, List[CutPoint]]:
    """
    Read a cut CSV; the largest cut index of each trajectory is its trip end.

    Returns:
        trajectory id -> cut points ordered by index
    """
    frame = csvio.read_table(path, CUT_COLUMNS)
    idx = csvio.numeric(frame, "cut_index")
    lat = csvio.numeric(frame, "lat")
    lng = csvio.numeric(frame, "lng")
    ts = csvio.numeric(frame, "t")
    lines = frame[csvio.LINE_COLUMN].to_numpy()

    grouped: Dict[str, List[CutPoint]] = {}
    for i, tid in enumerate(frame["trajectory_id"].str.strip()):
        if not np.isfinite([idx[i], lat[i], lng[i], ts[i]]).all():
            csvio.warn_row(int(lines[i]), "non-numeric cut field")
            continue
        grouped.setdefault(tid, []).append(
            CutPoint(tid, int(idx[i]), float(lat[i]), float(lng[i]), float(ts[i]))
        )

    result = {}
    for tid in sorted(grouped):
        cuts = sorted(grouped[tid], key=lambda c: c.cut_index)
        if len({c.cut_index for c in cuts}) != len(cuts):
            raise DataError(f"{path}: duplicate cut index in trajectory '{tid}'")
        last = cuts[-1]
        cuts[-1] = CutPoint(last.trajectory_id, last.cut_index, last.lat, last.lng, last.t, True)
        result[tid] = cuts
    return result
