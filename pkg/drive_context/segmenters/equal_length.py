"""
Equal-Length baseline: η segments of (almost) equal point count.
"""

from typing import Dict

from ..segmentation import Segmentation
from ..trajectory import Trajectory
from .base import SegmentRequest, check_eta


def create_equal_length_definition() -> Dict:
    return {
        "name": "equal_length",
        "description": "Divide the trajectory into eta equal-size segments.",
        "needs_model": False,
    }


def baseline_equal_length(traj: Trajectory, eta: int) -> Segmentation:
    """Cuts at floor(i * |T| / eta) for i = 1..eta."""
    n = len(traj)
    check_eta(n, eta)
    cuts = tuple((i * n) // eta for i in range(1, eta + 1))
    return Segmentation(traj.id, cuts).with_points(traj.points)


def execute_equal_length(traj: Trajectory, request: SegmentRequest) -> Segmentation:
    return baseline_equal_length(traj, request.eta)
