"""Base interface for optimisation stages."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from time import perf_counter
from typing import List

from ..recording import TrainingRecorder
from ..scene.model import SceneModel
from .results import StageResult, StageStats


@dataclass(slots=True)
class StageHistory:
    losses: List[float] = field(default_factory=list)
    rollbacks: int = 0
    culled: int = 0


class TrainingStage(ABC):
    """One optimisation phase run against a scene model."""

    name: str = "stage"

    def run(self, model: SceneModel, *, recorder: TrainingRecorder | None = None) -> StageResult:
        start = perf_counter()
        history = self._optimize(model, recorder=recorder)
        runtime_ms = (perf_counter() - start) * 1000
        losses = history.losses
        stats = StageStats(
            stage=self.name,
            iterations=len(losses),
            initial_loss=losses[0] if losses else float("nan"),
            final_loss=losses[-1] if losses else float("nan"),
            runtime_ms=runtime_ms,
            rollbacks=history.rollbacks,
            culled=history.culled,
        )
        return StageResult(losses=list(losses), stats=stats)

    @abstractmethod
    def _optimize(self, model: SceneModel, *, recorder: TrainingRecorder | None = None) -> StageHistory:
        """Run the stage in place and return its loss history."""
