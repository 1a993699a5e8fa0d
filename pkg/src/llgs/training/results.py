"""Result dataclasses for training stages."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List

from ..recording import TrainingRecorder

if TYPE_CHECKING:
    from ..scene.model import SceneModel


@dataclass(slots=True)
class StageStats:
    stage: str
    iterations: int
    initial_loss: float
    final_loss: float
    runtime_ms: float
    rollbacks: int = 0
    culled: int = 0


@dataclass(slots=True)
class StageResult:
    losses: List[float]
    stats: StageStats

    @property
    def improved(self) -> bool:
        return bool(self.losses) and self.stats.final_loss < self.stats.initial_loss


@dataclass(slots=True)
class TrainingResult:
    model: "SceneModel"
    log: TrainingRecorder
    stages: List[StageResult] = field(default_factory=list)

    def stage(self, name: str) -> StageResult | None:
        for result in self.stages:
            if result.stats.stage == name:
                return result
        return None
