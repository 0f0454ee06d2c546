"""
Shared request type for segmentation algorithms.

Every algorithm is registered as a (definition, executor) pair; the executor
takes a trajectory and a SegmentRequest and returns a Segmentation.
"""

from dataclasses import dataclass, field
from typing import Optional

from ..config import RunConfig
from ..errors import InfeasibleSegmentationError
from ..markov import MarkovModel


@dataclass(frozen=True)
class SegmentRequest:
    """
    Per-trajectory inputs an algorithm may need.

    Attributes:
        eta: Target segment count for the fixed-count baselines
        seed: Trajectory-level seed (already derived from the run seed)
        config: Resolved run configuration
        model: Markov model, required by dsegment only
    """
    eta: int = 1
    seed: int = 0
    config: RunConfig = field(default_factory=RunConfig)
    model: Optional[MarkovModel] = None


def check_eta(n_points: int, eta: int) -> None:
    if eta < 1 or eta > n_points:
        raise InfeasibleSegmentationError(
            f"cannot cut {n_points} points into {eta} segments"
        )
