"""
Stable-Criteria baseline.

Greedy scan: a segment grows while the spread of its speeds and the circular
spread of its headings stay within the thresholds. The first point that breaks
either bound starts a new segment. Short segments are merged afterwards so
every segment has at least min_len points.
"""

import bisect
from typing import Dict, List, Sequence

from ..segmentation import Segmentation
from ..trajectory import Trajectory
from .base import SegmentRequest


def create_stable_criteria_definition() -> Dict:
    return {
        "name": "stable_criteria",
        "description": "Cut where speed or heading spread leaves a stable band.",
        "needs_model": False,
    }


def circular_spread(sorted_headings: Sequence[float]) -> float:
    """Smallest arc (degrees) containing every heading; input sorted in [0, 360)."""
    if len(sorted_headings) < 2:
        return 0.0
    gaps = [b - a for a, b in zip(sorted_headings, sorted_headings[1:])]
    gaps.append(sorted_headings[0] + 360.0 - sorted_headings[-1])
    return 360.0 - max(gaps)


def merge_short(cuts: Sequence[int], n_points: int, min_len: int) -> List[int]:
    """
    Drop cuts that leave a segment shorter than min_len.

    A short inner segment merges into its successor; a short final segment
    merges into its predecessor.
    """
    kept: List[int] = []
    prev = 0
    for cut in cuts:
        if cut >= n_points:
            break
        if cut - prev >= min_len:
            kept.append(cut)
            prev = cut
    while kept and n_points - kept[-1] < min_len:
        kept.pop()
    return kept + [n_points]


def baseline_stable_criteria(
    traj: Trajectory,
    speed_range_kmh: float = 10.0,
    heading_range_deg: float = 30.0,
    min_len: int = 5,
) -> Segmentation:
    """
    Segment by spatiotemporal stability heuristics.

    Args:
        traj: Trajectory to segment
        speed_range_kmh: Largest allowed max - min speed inside a segment
        heading_range_deg: Largest allowed circular heading spread inside a segment
        min_len: Minimum points per segment after merging

    Returns:
        Segmentation over the raw trajectory points
    """
    points = traj.points
    n = len(points)
    raw_cuts: List[int] = []

    lo = hi = points[0].speed
    headings = [points[0].heading]
    for i in range(1, n):
        p = points[i]
        new_lo, new_hi = min(lo, p.speed), max(hi, p.speed)
        candidate = list(headings)
        bisect.insort(candidate, p.heading)
        if new_hi - new_lo > speed_range_kmh or circular_spread(candidate) > heading_range_deg:
            # point i (0-based) opens a new segment, so the cut is the point before it
            raw_cuts.append(i)
            lo = hi = p.speed
            headings = [p.heading]
        else:
            lo, hi = new_lo, new_hi
            headings = candidate

    cuts = merge_short(raw_cuts, n, min_len)
    return Segmentation(traj.id, tuple(cuts)).with_points(points)


def execute_stable_criteria(traj: Trajectory, request: SegmentRequest) -> Segmentation:
    cfg = request.config
    return baseline_stable_criteria(
        traj,
        speed_range_kmh=cfg.evaluate.stable_speed_range_kmh,
        heading_range_deg=cfg.evaluate.stable_heading_range_deg,
        min_len=cfg.segment.min_len,
    )
