"""
Probabilistic Movement Dissimilarity (PMD) transformation.

For each consecutive pair of points the transform asks the population model
where drivers usually go from the current state and measures how far the
observed next state is from those targets:

    v = sum(dist(next, r) * P(current -> r) for r in R) / |R|

The sum is divided by |R|, the number of outgoing transitions, not by the
total probability.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

from . import csvio
from .errors import UnknownStateError
from .markov import MarkovModel, lookup_transitions, requantize
from .trajectory import PreprocessedPoint

logger = logging.getLogger(__name__)

# level_trace marker for steps filled by the sentinel policy
SENTINEL_LEVEL = -1


@dataclass(frozen=True)
class PmdSignal:
    """
    PMD values of one trajectory.

    Attributes:
        trajectory_id: Source trajectory
        values: One non-negative value per step (|T| - 1 values)
        level_trace: Model level that answered each step, SENTINEL_LEVEL if none did
    """
    trajectory_id: str
    values: Tuple[float, ...]
    level_trace: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.values)

    @property
    def sentinel_steps(self) -> int:
        return sum(1 for level in self.level_trace if level == SENTINEL_LEVEL)


def state_distance(a: Sequence[float], b: Sequence[float], scale: Optional[Sequence[float]] = None) -> float:
    """Euclidean distance between two state triples, optionally in grid units."""
    if scale is None:
        return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
    return math.sqrt(sum(((x - y) / s) ** 2 for x, y, s in zip(a, b, scale)))


def transform(
    traj: Sequence[PreprocessedPoint],
    model: MarkovModel,
    unknown_state: str = "error",
    distance_scale: str = "raw",
    trajectory_id: Optional[str] = None,
) -> PmdSignal:
    """
    Transform a preprocessed trajectory into its PMD signal.

    The next state is re-quantized to the level that answered the lookup before
    distances are taken. Unknown current states either raise (policy "error") or
    repeat the running maximum of the signal (policy "sentinel").

    Args:
        traj: Preprocessed points, at least 2
        model: Built Markov model
        unknown_state: "error" or "sentinel"
        distance_scale: "raw" triples or "grid" (each axis divided by its level step)
        trajectory_id: Used for error messages and the signal id

    Returns:
        PmdSignal with len(traj) - 1 values
    """
    if len(traj) < 2:
        raise ValueError("PMD transform needs at least 2 points")

    finest = model.quantization[0]
    values = []
    trace = []
    running_max = 0.0
    for current, following in zip(traj, traj[1:]):
        phi = requantize(current.triple, finest)
        try:
            level, edges = lookup_transitions(model, phi)
        except UnknownStateError:
            if unknown_state != "sentinel":
                raise UnknownStateError(phi, trajectory_id)
            values.append(running_max)
            trace.append(SENTINEL_LEVEL)
            continue

        grid = model.quantization[level]
        phi_next = requantize(following.triple, grid)
        scale = grid.steps() if distance_scale == "grid" else None
        v = sum(state_distance(phi_next, r, scale) * p for r, p in edges) / len(edges)
        values.append(v)
        trace.append(level)
        running_max = max(running_max, v)

    if trace.count(SENTINEL_LEVEL):
        logger.warning(
            f"trajectory={trajectory_id} sentinel_steps={trace.count(SENTINEL_LEVEL)} of {len(trace)}"
        )
    return PmdSignal(
        trajectory_id=trajectory_id if trajectory_id is not None else "",
        values=tuple(values),
        level_trace=tuple(trace),
    )


def write_signals(path: str, signals: Iterable[PmdSignal], echo: Optional[dict] = None) -> int:
    """Export signals as `trajectory_id,step_index,value,level_used` (steps 1-based)."""
    rows = []
    for signal in sorted(signals, key=lambda s: s.trajectory_id):
        for step, (value, level) in enumerate(zip(signal.values, signal.level_trace), start=1):
            rows.append((signal.trajectory_id, step, value, level))
    return csvio.write_table(path, ("trajectory_id", "step_index", "value", "level_used"), rows, echo)
