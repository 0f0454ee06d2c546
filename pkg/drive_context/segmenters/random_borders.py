"""
Random baseline: η - 1 interior borders drawn without replacement.
"""

from typing import Dict

import numpy as np

from ..segmentation import Segmentation
from ..trajectory import Trajectory
from .base import SegmentRequest, check_eta


def create_random_definition() -> Dict:
    return {
        "name": "random",
        "description": "Find eta segment borders uniformly at random (seeded).",
        "needs_model": False,
    }


def baseline_random(traj: Trajectory, eta: int, seed: int) -> Segmentation:
    """
    Draw eta - 1 distinct interior cutting indexes from 1..|T|-1, then append |T|.

    Deterministic for a given (trajectory length, eta, seed).
    """
    n = len(traj)
    check_eta(n, eta)
    rng = np.random.default_rng(seed)
    interior = rng.choice(np.arange(1, n), size=eta - 1, replace=False) if eta > 1 else []
    cuts = tuple(sorted(int(c) for c in interior)) + (n,)
    return Segmentation(traj.id, cuts).with_points(traj.points)


def execute_random(traj: Trajectory, request: SegmentRequest) -> Segmentation:
    return baseline_random(traj, request.eta, request.seed)
