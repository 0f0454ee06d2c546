"""
Segmentation algorithm registry.

Registers every available algorithm under its name. Evaluation and the CLI
look algorithms up here, so an unknown name fails before any work starts.
"""

from typing import Callable, Dict, List, Tuple

from ..errors import UnknownAlgorithmError
from ..segmentation import Segmentation
from ..trajectory import Trajectory
from .base import SegmentRequest
from .dsegment import create_dsegment_definition, execute_dsegment
from .equal_length import create_equal_length_definition, execute_equal_length
from .random_borders import create_random_definition, execute_random
from .stable_criteria import create_stable_criteria_definition, execute_stable_criteria

Executor = Callable[[Trajectory, SegmentRequest], Segmentation]


class SegmenterRegistry:
    """Name -> (definition, executor)."""

    def __init__(self):
        self.definitions: Dict[str, Dict] = {}
        self.executors: Dict[str, Executor] = {}

    def register(self, definition: Dict, executor: Executor) -> None:
        name = definition["name"]
        self.definitions[name] = definition
        self.executors[name] = executor

    def names(self) -> List[str]:
        return sorted(self.definitions)

    def get(self, name: str) -> Tuple[Dict, Executor]:
        if name not in self.executors:
            raise UnknownAlgorithmError(name, self.names())
        return self.definitions[name], self.executors[name]

    def resolve(self, names: List[str]) -> List[str]:
        """Validate a list of names up front; returns them unchanged."""
        for name in names:
            self.get(name)
        return list(names)

    def needs_model(self, names: List[str]) -> bool:
        return any(self.definitions[n].get("needs_model") for n in names)


def register_all_segmenters(registry: SegmenterRegistry) -> SegmenterRegistry:
    """Register the model-based algorithm and the three baselines."""
    # dSegment - the model-based segmenter
    registry.register(create_dsegment_definition(), execute_dsegment)

    # Baselines used for comparison
    registry.register(create_equal_length_definition(), execute_equal_length)
    registry.register(create_random_definition(), execute_random)
    registry.register(create_stable_criteria_definition(), execute_stable_criteria)
    return registry


def default_registry() -> SegmenterRegistry:
    return register_all_segmenters(SegmenterRegistry())
