"""
Population Markov model over driving states.

A driving state is a quantized (speed, acceleration, change-of-heading) triple.
The model keeps one transition table per Wedding-Cake level: level 0 uses the
finest grid, each further level a coarser one. Queries back off from fine to
coarse until a level knows the state.

Model file layout (little-endian):
    b"DCMM" | u32 version | u32 metadata length | metadata JSON (utf-8)
    u32 level count, then per level:
        3 x f64 quantization steps | u32 source count, then per source:
            3 x f64 state | u64 outgoing count | u32 edge count, then per edge:
                3 x f64 target | f64 probability
"""

import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

from .config import ModelConfig, QuantizationConfig
from .errors import BuildError, DegenerateTrajectoryError, ModelFormatError, ModelVersionError, UnknownStateError
from .parallel import run_parallel
from .trajectory import PreprocessedPoint, Trajectory, preprocess, quantize, quantize_dheading

logger = logging.getLogger(__name__)

MAGIC = b"DCMM"
FORMAT_VERSION = 1


class DrivingState(NamedTuple):
    """Quantized (speed km/h, accel m/s², change of heading degrees)."""
    speed_q: float
    accel_q: float
    dheading_q: float


Transition = Tuple[DrivingState, float]


@dataclass(frozen=True)
class TransitionTable:
    """
    Sparse transition probabilities of one level.

    Attributes:
        probs: (source, target) -> probability
        outgoing: source -> ((target, probability), ...) sorted by target
    """
    probs: Dict[Tuple[DrivingState, DrivingState], float]
    outgoing: Dict[DrivingState, Tuple[Transition, ...]]

    @classmethod
    def from_counts(cls, pair_counts: Dict[Tuple[DrivingState, DrivingState], int]) -> "TransitionTable":
        totals: Counter = Counter()
        for (src, _), n in pair_counts.items():
            totals[src] += n
        grouped: Dict[DrivingState, List[Transition]] = {}
        probs = {}
        for (src, dst), n in sorted(pair_counts.items()):
            p = n / totals[src]
            probs[(src, dst)] = p
            grouped.setdefault(src, []).append((dst, p))
        return cls(probs=probs, outgoing={s: tuple(edges) for s, edges in grouped.items()})

    @classmethod
    def from_outgoing(cls, outgoing: Dict[DrivingState, Tuple[Transition, ...]]) -> "TransitionTable":
        probs = {(src, dst): p for src, edges in outgoing.items() for dst, p in edges}
        return cls(probs=probs, outgoing=dict(outgoing))

    @property
    def n_transitions(self) -> int:
        return len(self.probs)

    def states(self) -> set:
        seen = set(self.outgoing)
        seen.update(dst for _, dst in self.probs)
        return seen


@dataclass(frozen=True)
class MarkovModel:
    """
    Wedding-Cake Markov model, finest level first.

    Attributes:
        levels: One TransitionTable per level
        quantization: Grid of each level
        counts: Per level, source state -> number of observed outgoing transitions
        metadata: Provenance (config echo); not part of model semantics
    """
    levels: Tuple[TransitionTable, ...]
    quantization: Tuple[QuantizationConfig, ...]
    counts: Tuple[Dict[DrivingState, int], ...]
    metadata: Optional[Dict[str, Any]] = field(default=None, compare=False)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def stats(self) -> List[Dict[str, int]]:
        """State and transition counts per level."""
        return [
            {
                "level": i,
                "states": len(table.states()),
                "transitions": table.n_transitions,
                "observations": sum(self.counts[i].values()),
            }
            for i, table in enumerate(self.levels)
        ]


def requantize(state: Sequence[float], q: QuantizationConfig) -> DrivingState:
    """Map a triple onto the grid q (ties toward zero)."""
    return DrivingState(
        quantize(state[0], q.speed_step),
        quantize(state[1], q.accel_step),
        quantize_dheading(state[2], q.dheading_step),
    )


def state_of(point: PreprocessedPoint, level: int, cfg: ModelConfig) -> DrivingState:
    """Driving state of a preprocessed point on the grid of the given level."""
    return requantize(point.triple, cfg.level_quantization(level))


def count_transitions(
    trajectory: Trajectory,
    cfg: ModelConfig,
) -> Optional[List[Counter]]:
    """Per-level counts of consecutive state pairs for one trajectory."""
    try:
        points = preprocess(trajectory, cfg.quantization, cfg.max_noise_speed_mps)
    except DegenerateTrajectoryError as e:
        logger.warning(f"skipping trajectory: {e}")
        return None

    per_level = []
    for level in range(cfg.n_levels):
        states = [state_of(p, level, cfg) for p in points]
        per_level.append(Counter(zip(states, states[1:])))
    return per_level


def build_model(trajs: Sequence[Trajectory], cfg: ModelConfig, jobs: int = 1) -> MarkovModel:
    """
    Build the population model from a corpus.

    Consecutive state pairs are counted at every level and normalised per source
    state. Counting runs per trajectory (optionally in parallel) and the count
    tables are merged, so the result does not depend on trajectory order.

    Args:
        trajs: Training trajectories
        cfg: Model configuration
        jobs: Worker processes

    Returns:
        MarkovModel
    """
    if not trajs:
        raise BuildError("cannot build a model from an empty corpus")

    merged = [Counter() for _ in range(cfg.n_levels)]
    used = 0
    for per_level in run_parallel(partial(count_transitions, cfg=cfg), trajs, jobs):
        if per_level is None:
            continue
        used += 1
        for level, counter in enumerate(per_level):
            merged[level].update(counter)

    if used == 0:
        raise BuildError("no trajectory has at least 2 points after cleaning")

    levels = tuple(TransitionTable.from_counts(dict(c)) for c in merged)
    counts = []
    for counter in merged:
        totals: Counter = Counter()
        for (src, _), n in counter.items():
            totals[src] += n
        counts.append(dict(sorted(totals.items())))

    model = MarkovModel(
        levels=levels,
        quantization=tuple(cfg.level_quantization(i) for i in range(cfg.n_levels)),
        counts=tuple(counts),
    )
    for row in model.stats():
        logger.info(
            f"level={row['level']} states={row['states']} transitions={row['transitions']}"
        )
    return model


def lookup_transitions(
    model: MarkovModel,
    state: Sequence[float],
) -> Tuple[int, Tuple[Transition, ...]]:
    """
    Outgoing transitions of a state, backing off to coarser levels.

    Returns:
        (level that answered, ((target, probability), ...))

    Raises:
        UnknownStateError: no level has an outgoing transition for the state
    """
    for level, (table, grid) in enumerate(zip(model.levels, model.quantization)):
        edges = table.outgoing.get(requantize(state, grid))
        if edges:
            return level, edges
    raise UnknownStateError(tuple(state))


def save_model(model: MarkovModel, path: str) -> None:
    """Write the versioned binary model file."""
    meta = json.dumps(model.metadata or {}, sort_keys=True, separators=(",", ":")).encode()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", FORMAT_VERSION, len(meta))
    out += meta
    out += struct.pack("<I", model.n_levels)
    for table, grid, counts in zip(model.levels, model.quantization, model.counts):
        out += struct.pack("<3d", *grid.steps())
        sources = sorted(table.outgoing)
        out += struct.pack("<I", len(sources))
        for src in sources:
            edges = table.outgoing[src]
            out += struct.pack("<3dQI", *src, counts.get(src, 0), len(edges))
            for dst, p in edges:
                out += struct.pack("<4d", *dst, p)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(bytes(out))


def load_model(path: str) -> MarkovModel:
    """
    Read a model file written by save_model.

    Raises:
        ModelFormatError: bad magic bytes or truncated/corrupt content
        ModelVersionError: file written by a newer schema version
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a DriveContext model file (bad magic bytes)")
    reader = _Reader(data, 4, path)
    version, meta_len = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise ModelVersionError(found=version, supported=FORMAT_VERSION)
    try:
        metadata = json.loads(reader.take(meta_len).decode()) or None
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"{path}: corrupt metadata block") from e

    (n_levels,) = reader.unpack("<I")
    levels, grids, counts = [], [], []
    for _ in range(n_levels):
        grids.append(QuantizationConfig(*reader.unpack("<3d")))
        (n_sources,) = reader.unpack("<I")
        outgoing: Dict[DrivingState, Tuple[Transition, ...]] = {}
        level_counts: Dict[DrivingState, int] = {}
        for _ in range(n_sources):
            s, a, h, total, n_edges = reader.unpack("<3dQI")
            src = DrivingState(s, a, h)
            edges = []
            for _ in range(n_edges):
                ts, ta, th, p = reader.unpack("<4d")
                edges.append((DrivingState(ts, ta, th), p))
            outgoing[src] = tuple(edges)
            level_counts[src] = total
        levels.append(TransitionTable.from_outgoing(outgoing))
        counts.append(level_counts)
    if not reader.exhausted():
        raise ModelFormatError(f"{path}: trailing bytes after model data")

    return MarkovModel(
        levels=tuple(levels),
        quantization=tuple(grids),
        counts=tuple(counts),
        metadata=metadata,
    )


def export_json(model: MarkovModel) -> Dict[str, Any]:
    """Inspection export: per level, `{from, to, prob}` triples."""
    return {
        "format": "drivecontext-markov",
        "version": FORMAT_VERSION,
        "config": model.metadata or {},
        "levels": [
            {
                "level": i,
                "quantization": {
                    "speed_step": grid.speed_step,
                    "accel_step": grid.accel_step,
                    "dheading_step": grid.dheading_step,
                },
                "transitions": [
                    {"from": list(src), "to": list(dst), "prob": p}
                    for (src, dst), p in sorted(table.probs.items())
                ],
            }
            for i, (table, grid) in enumerate(zip(model.levels, model.quantization))
        ],
    }


class _Reader:
    """Bounds-checked struct reader."""

    def __init__(self, data: bytes, offset: int, path: str):
        self.data = data
        self.offset = offset
        self.path = path

    def unpack(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        chunk = self.take(size)
        return struct.unpack(fmt, chunk)

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ModelFormatError(f"{self.path}: truncated model file")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def exhausted(self) -> bool:
        return self.offset == len(self.data)
