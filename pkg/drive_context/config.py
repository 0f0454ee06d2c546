"""
Configuration management for DriveContext.

Handles loading configuration from TOML or JSON files with sensible defaults.
Each pipeline stage reads its own section; CLI flags override file values.
"""

import json
import tomllib
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from .errors import ConfigError

DEFAULT_THRESHOLDS_M = (0.0, 25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 250.0)

# Canonical trajectory CSV column names.
TRAJECTORY_COLUMNS = ("id", "timestamp", "lat", "lng", "speed", "accel", "heading")


@dataclass(frozen=True)
class QuantizationConfig:
    """
    Grid steps used to quantize a driving state.

    Attributes:
        speed_step: Speed grid in km/h
        accel_step: Acceleration grid in m/s²
        dheading_step: Change-of-heading grid in degrees
    """
    speed_step: float = 5.0
    accel_step: float = 1.0
    dheading_step: float = 5.0

    def scaled(self, factor: int) -> "QuantizationConfig":
        """Return the grid with every step multiplied by factor."""
        return QuantizationConfig(
            speed_step=self.speed_step * factor,
            accel_step=self.accel_step * factor,
            dheading_step=self.dheading_step * factor,
        )

    def steps(self) -> Tuple[float, float, float]:
        return (self.speed_step, self.accel_step, self.dheading_step)


@dataclass(frozen=True)
class ModelConfig:
    """
    Markov model construction settings.

    Attributes:
        quantization: Finest (level 0) grid
        level_factors: Step multiplier per Wedding-Cake level, finest first
        max_noise_speed_mps: Implied speed above which a GPS fix is dropped
    """
    quantization: QuantizationConfig = field(default_factory=QuantizationConfig)
    level_factors: Tuple[int, ...] = (1, 2, 4)
    max_noise_speed_mps: float = 65.0

    def level_quantization(self, level: int) -> QuantizationConfig:
        if not 0 <= level < len(self.level_factors):
            raise ConfigError(f"model level {level} does not exist ({len(self.level_factors)} levels)")
        return self.quantization.scaled(self.level_factors[level])

    @property
    def n_levels(self) -> int:
        return len(self.level_factors)


@dataclass(frozen=True)
class SegmentConfig:
    """dSegment settings: segment length, k selection and unknown-state policy."""
    min_len: int = 5
    theta: float = 0.02
    k_divisor: int = 5
    unknown_state: str = "error"  # error | sentinel
    distance_scale: str = "raw"  # raw | grid


@dataclass(frozen=True)
class EvidenceConfig:
    """Congestion evidence detection thresholds."""
    max_speed_kmh: float = 55.0
    min_run: int = 5
    min_support: int = 12
    radius_m: float = 200.0
    congestion_subtypes: Tuple[str, ...] = ("congestion",)


@dataclass(frozen=True)
class DescribeConfig:
    """dDescribe settings for relevancy and correlation."""
    th_m: float = 200.0
    min_cuts: int = 10
    include_trip_end: bool = False
    temporal_strategy: str = "evidence"  # evidence | overlap


@dataclass(frozen=True)
class EvaluateConfig:
    """Precision/recall harness settings."""
    thresholds_m: Tuple[float, ...] = DEFAULT_THRESHOLDS_M
    eta_easy: int = 30
    eta_strict: int = 50
    eta: Optional[int] = None
    eta_from_annotations: bool = False  # eta = annotated borders + 1 per trajectory
    stable_speed_range_kmh: float = 10.0
    stable_heading_range_deg: float = 30.0
    include_trip_end: bool = False


@dataclass(frozen=True)
class RunConfig:
    """
    Resolved configuration for one CLI run.

    Attributes:
        model: Markov model settings
        segment: dSegment settings
        evidence: Congestion evidence settings
        describe: Correlation settings
        evaluate: Evaluation settings
        timezone: IANA zone of the dataset's local civil time
        seed: Single source of randomness
        jobs: Worker processes for per-trajectory stages
        columns: Header mapping, canonical name -> name used in the file
    """
    model: ModelConfig = field(default_factory=ModelConfig)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    evidence: EvidenceConfig = field(default_factory=EvidenceConfig)
    describe: DescribeConfig = field(default_factory=DescribeConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    timezone: Optional[str] = None
    seed: int = 0
    jobs: int = 1
    columns: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        """Raise ConfigError on any invalid value; return self for chaining."""
        q = self.model.quantization
        _positive("quantization.speed_step", q.speed_step)
        _positive("quantization.accel_step", q.accel_step)
        _positive("quantization.dheading_step", q.dheading_step)
        _positive("model.max_noise_speed_mps", self.model.max_noise_speed_mps)
        factors = self.model.level_factors
        if not factors or factors[0] != 1:
            raise ConfigError("model.level_factors must start with 1")
        for finer, coarser in zip(factors, factors[1:]):
            if coarser <= finer or coarser % finer != 0:
                raise ConfigError(
                    f"model.level_factors must be increasing integer multiples, got {list(factors)}"
                )
        if self.segment.min_len < 1:
            raise ConfigError("segment.min_len must be >= 1")
        _positive("segment.theta", self.segment.theta)
        if self.segment.k_divisor < 1:
            raise ConfigError("segment.k_divisor must be >= 1")
        _choice("segment.unknown_state", self.segment.unknown_state, ("error", "sentinel"))
        _choice("segment.distance_scale", self.segment.distance_scale, ("raw", "grid"))
        _positive("evidence.max_speed_kmh", self.evidence.max_speed_kmh)
        _positive("evidence.radius_m", self.evidence.radius_m)
        if self.evidence.min_run < 1 or self.evidence.min_support < 1:
            raise ConfigError("evidence.min_run and evidence.min_support must be >= 1")
        _positive("describe.th_m", self.describe.th_m)
        if self.describe.min_cuts < 1:
            raise ConfigError("describe.min_cuts must be >= 1")
        _choice("describe.temporal_strategy", self.describe.temporal_strategy, ("evidence", "overlap"))
        if any(t < 0 for t in self.evaluate.thresholds_m):
            raise ConfigError("evaluate.thresholds_m must be non-negative")
        for name in ("eta_easy", "eta_strict"):
            if getattr(self.evaluate, name) < 1:
                raise ConfigError(f"evaluate.{name} must be >= 1")
        if self.evaluate.eta is not None and self.evaluate.eta < 1:
            raise ConfigError("evaluate.eta must be >= 1")
        if not isinstance(self.evaluate.eta_from_annotations, bool):
            raise ConfigError("evaluate.eta_from_annotations must be true or false")
        _positive("evaluate.stable_speed_range_kmh", self.evaluate.stable_speed_range_kmh)
        _positive("evaluate.stable_heading_range_deg", self.evaluate.stable_heading_range_deg)
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.timezone is not None:
            tz(self.timezone)
        unknown = set(self.columns) - set(TRAJECTORY_COLUMNS) - {"route"}
        if unknown:
            raise ConfigError(f"columns: unknown canonical name(s): {', '.join(sorted(unknown))}")
        return self

    def echo(self) -> Dict[str, Any]:
        """
        Semantic configuration embedded in output artifacts.

        Leaves out jobs so serial and parallel runs write identical bytes.
        """
        data = asdict(self)
        data.pop("jobs")
        return _jsonable(data)

    def require_timezone(self) -> ZoneInfo:
        if self.timezone is None:
            raise ConfigError("a dataset timezone is required (set 'timezone' or pass --timezone)")
        return tz(self.timezone)


def tz(name: str) -> ZoneInfo:
    """Resolve an IANA timezone name."""
    try:
        return ZoneInfo(name)
    except (ZoneInfoNotFoundError, ValueError) as e:
        raise ConfigError(f"unknown timezone '{name}'") from e


def get_default_config() -> RunConfig:
    """
    Get default configuration.

    Returns:
        RunConfig with default values
    """
    return RunConfig()


def load_config(path: Optional[str] = None) -> RunConfig:
    """
    Load configuration from a TOML or JSON file.

    Sections present in the file are merged over the defaults; absent sections
    and keys keep their default values.

    Args:
        path: Config file (.toml or .json); None returns defaults

    Returns:
        Validated RunConfig
    """
    if path is None:
        return get_default_config()

    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {path}")

    try:
        if config_path.suffix == ".json":
            data = json.loads(config_path.read_text())
        else:
            data = tomllib.loads(config_path.read_text())
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"failed to parse config {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must contain a table/object at top level")

    return config_from_dict(data).validate()


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from nested plain data, defaults filling the gaps."""
    try:
        return _merge(get_default_config(), data)
    except TypeError as e:
        raise ConfigError(f"invalid config: {e}") from e


def save_config(config: RunConfig, path: str) -> None:
    """
    Save configuration as JSON.

    Args:
        config: Configuration to save
        path: Destination file
    """
    Path(path).write_text(json.dumps(_jsonable(asdict(config)), indent=2, sort_keys=True) + "\n")


def with_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """
    Apply dotted-key overrides, skipping None values.

    Example: with_overrides(cfg, **{"segment.min_len": 3, "seed": 7})
    """
    nested: Dict[str, Any] = {}
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        target = nested
        for part in filter(None, section.split(".")):
            target = target.setdefault(part, {})
        target[name] = value
    return _merge(config, nested).validate()


def _merge(base: Any, data: Dict[str, Any]) -> Any:
    updates = {}
    known = {f.name: f for f in fields(base)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key '{key}' in {type(base).__name__}")
        current = getattr(base, key)
        if is_dataclass(current) and isinstance(value, dict):
            updates[key] = _merge(current, value)
        elif isinstance(current, tuple) and isinstance(value, (list, tuple)):
            updates[key] = tuple(value)
        else:
            updates[key] = value
    return replace(base, **updates)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _positive(name: str, value: float) -> None:
    if not value > 0:
        raise ConfigError(f"{name} must be > 0, got {value}")


def _choice(name: str, value: str, allowed: Tuple[str, ...]) -> None:
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {', '.join(allowed)}, got '{value}'")
