"""Depth-guided refinement of anchor positions and offsets before decomposition."""

from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..geometry import Camera, Image
from ..losses import depth_pcc_loss
from ..optim.adam import AdamState, adam_step
from ..recording import TrainingRecorder
from ..renderers.components import render_backward, render_components
from ..scene.model import GROUP_OFFSET_INTRINSIC, GROUP_OFFSET_TRANSIENT, GROUP_POSITION, SceneModel
from .base import StageHistory, TrainingStage

logger = logging.getLogger(__name__)

CONVERGED = 1e-10


def mean_depth_loss(
    model: SceneModel, views: Sequence[Tuple[Camera, Image]], *, backward: bool = False
) -> Tuple[float, int]:
    """Mean correlation loss over the views that are not skipped, and how many were used."""
    terms = []
    for cam, prior in views:
        maps = render_components(model, cam)
        term = depth_pcc_loss(maps.depth, prior.data, maps.alpha)
        if term.skipped:
            continue
        terms.append((maps, term))
    if not terms:
        return float("nan"), 0
    if backward:
        for maps, term in terms:
            render_backward(model, maps, {"depth": term.grad / len(terms)})
    return float(np.mean([t.value for _, t in terms])), len(terms)


class DepthWarmup(TrainingStage):
    """Adam on positions and offsets only, minimising the mean depth-correlation loss."""

    name = "warmup"

    def __init__(self, views: Sequence[Tuple[Camera, Image]], iterations: int, lr: float, *, progress: bool = False):
        self.views = list(views)
        self.iterations = iterations
        self.lr = lr
        self.progress = progress

    def _optimize(self, model: SceneModel, *, recorder: TrainingRecorder | None = None) -> StageHistory:
        history = StageHistory()
        if not self.views or self.iterations == 0:
            return history
        adam = AdamState()
        rates = {GROUP_POSITION: self.lr, GROUP_OFFSET_INTRINSIC: self.lr, GROUP_OFFSET_TRANSIENT: self.lr}
        for iteration in tqdm(range(self.iterations), desc="warm-up", disable=not self.progress):
            model.store.zero_grad()
            loss, used = mean_depth_loss(model, self.views, backward=True)
            if used == 0:
                logger.warning("Warm-up stopped: every view's depth correlation was skipped")
                break
            history.losses.append(loss)
            if recorder is not None:
                recorder.record("warmup", "step", iteration=iteration, depth=loss, views=used)
            if loss < CONVERGED:
                logger.info("Warm-up converged at iteration %d", iteration)
                model.store.zero_grad()
                break
            adam_step(model.store, adam, rates)
        return history


def depth_warmup_refine(
    model: SceneModel,
    views: Sequence[Tuple[Camera, Image]],
    iters: int,
    lr: float,
    *,
    recorder: TrainingRecorder | None = None,
) -> SceneModel:
    """Refine ``model`` in place against scale-free depth priors and return it."""
    result = DepthWarmup(views, iters, lr).run(model, recorder=recorder)
    if result.losses:
        logger.info(
            "Warm-up: depth loss %.6f -> %.6f over %d steps",
            result.stats.initial_loss,
            result.stats.final_loss,
            result.stats.iterations,
        )
    return model


def warmup_views(views) -> List[Tuple[Camera, Image]]:
    return [(v.camera, v.depth_prior) for v in views if v.depth_prior is not None]
