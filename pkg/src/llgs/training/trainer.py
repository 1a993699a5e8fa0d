"""Full training run: depth warm-up, then decomposition, then checkpoint."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict

from ..recording import TrainingRecorder
from ..scene.checkpoint import save_checkpoint
from ..scene.model import SceneModel
from .config import TrainConfig
from .dataset import Dataset
from .decomposition import Decomposition
from .results import TrainingResult
from .warmup import DepthWarmup, warmup_views

logger = logging.getLogger(__name__)


def train(
    model: SceneModel,
    dataset: Dataset,
    cfg: TrainConfig,
    *,
    recorder: TrainingRecorder | None = None,
    preview_dir: str | Path | None = None,
    checkpoint: str | Path | None = None,
    run_config: Dict[str, Any] | None = None,
    progress: bool = False,
) -> TrainingResult:
    """
    Optimise ``model`` in place and return it with the run log.

    ``run_config`` is echoed as the log header so the run can be replayed from the log alone.
    Raises NumericalAbort when the decomposition loop keeps producing non-finite values.
    """
    if model.num_views != len(dataset.train_views):
        logger.warning(
            "Model has %d embeddings but the dataset has %d training views",
            model.num_views,
            len(dataset.train_views),
        )
    recorder = recorder if recorder is not None else TrainingRecorder()
    recorder.record("run", "config", config=run_config or {"train": _fields(cfg)}, model=model.summary())
    result = TrainingResult(model=model, log=recorder)

    depth_views = warmup_views(dataset.train_views)
    if depth_views and cfg.warmup_iters > 0:
        warm = DepthWarmup(depth_views, cfg.warmup_iters, cfg.warmup_lr, progress=progress).run(model, recorder=recorder)
        result.stages.append(warm)
        logger.info("Warm-up finished after %d steps", warm.stats.iterations)
    else:
        logger.info("Skipping warm-up: no depth priors")

    stage = Decomposition(dataset, cfg, preview_dir=preview_dir, progress=progress).run(model, recorder=recorder)
    result.stages.append(stage)
    stats = stage.stats
    logger.info(
        "Decomposition: %d iterations, loss %.6f -> %.6f, %d rollbacks, %.1f ms",
        stats.iterations,
        stats.initial_loss,
        stats.final_loss,
        stats.rollbacks,
        stats.runtime_ms,
    )
    recorder.record("run", "done", anchors=model.num_anchors, stages=[s.stats.stage for s in result.stages])

    if checkpoint is not None:
        path = save_checkpoint(checkpoint, model, meta={"iterations": cfg.iterations, "seed": cfg.seed})
        logger.info("Checkpoint written to %s", path)
    return result


def _fields(cfg: TrainConfig) -> Dict[str, Any]:
    return {name: getattr(cfg, name) for name in cfg.__dataclass_fields__}
