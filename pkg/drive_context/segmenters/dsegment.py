"""
dSegment: model-based segmentation through the PMD signal.
"""

from typing import Dict

from ..errors import ConfigError
from ..segmentation import Segmentation, segment_trajectory
from ..trajectory import Trajectory
from .base import SegmentRequest


def create_dsegment_definition() -> Dict:
    return {
        "name": "dsegment",
        "description": "Optimal segmentation of the PMD signal under the population Markov model.",
        "needs_model": True,
    }


def execute_dsegment(traj: Trajectory, request: SegmentRequest) -> Segmentation:
    if request.model is None:
        raise ConfigError("dsegment needs a Markov model (pass --model)")
    cfg = request.config
    segmentation, _ = segment_trajectory(traj, request.model, cfg.model, cfg.segment)
    return segmentation
