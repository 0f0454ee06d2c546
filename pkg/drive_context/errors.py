"""
Exception hierarchy for DriveContext.

Library code raises these; only the CLI turns them into exit codes.
Exit codes: 2 for usage/config problems, 3 for data problems.
"""

from typing import Iterable, Optional, Tuple


class DriveContextError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigError(DriveContextError):
    """Invalid configuration, flags or parameters."""

    exit_code = 2


class UnknownAlgorithmError(ConfigError):
    """A segmentation algorithm name that is not registered."""

    def __init__(self, name: str, valid: Iterable[str]):
        self.name = name
        self.valid = sorted(valid)
        super().__init__(
            f"Unknown algorithm '{name}'. Valid names: {', '.join(self.valid)}"
        )

    def __reduce__(self):
        return (type(self), (self.name, self.valid))


class RegimeSpecError(ConfigError):
    """Synthetic regime specification that cannot be generated."""


class DataError(DriveContextError):
    """Input data that violates the expected model."""

    exit_code = 3


class SchemaError(DataError):
    """Input file is missing required columns."""

    def __init__(self, path: str, missing: Iterable[str]):
        self.path = path
        self.missing = sorted(missing)
        super().__init__(f"{path}: missing column(s): {', '.join(self.missing)}")

    def __reduce__(self):
        return (type(self), (self.path, self.missing))


class DegenerateTrajectoryError(DataError):
    """Fewer than two points survive cleaning."""

    def __init__(self, trajectory_id: str, remaining: int):
        self.trajectory_id = trajectory_id
        self.remaining = remaining
        super().__init__(
            f"trajectory '{trajectory_id}' has {remaining} point(s) after cleaning; need at least 2"
        )

    def __reduce__(self):
        return (type(self), (self.trajectory_id, self.remaining))


class UnknownStateError(DataError):
    """A driving state has no outgoing transitions at any model level."""

    def __init__(self, state: Tuple[float, float, float], trajectory_id: Optional[str] = None):
        self.state = tuple(state)
        self.trajectory_id = trajectory_id
        where = f" in trajectory '{trajectory_id}'" if trajectory_id is not None else ""
        super().__init__(f"driving state {self.state} is unknown to the model{where}")

    def __reduce__(self):
        return (type(self), (self.state, self.trajectory_id))


class ModelFormatError(DataError):
    """Model file is corrupt or not a model file."""


class ModelVersionError(ModelFormatError):
    """Model file was written by a newer schema version."""

    def __init__(self, found: int, supported: int):
        self.found = found
        self.supported = supported
        super().__init__(
            f"model file version {found} is not supported (this build reads version {supported})"
        )

    def __reduce__(self):
        return (type(self), (self.found, self.supported))


class BuildError(DataError):
    """Model cannot be built from the given corpus."""


class InfeasibleSegmentationError(DataError):
    """Requested segment count cannot satisfy the length constraints."""
