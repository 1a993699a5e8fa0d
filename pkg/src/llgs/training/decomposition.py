"""The main optimisation loop: intrinsic/transient decomposition with enhancement."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, Set

import numpy as np
from tqdm import tqdm

from ..branches import BranchCache
from ..errors import NumericalAbort
from ..geometry import Image
from ..images import write_png
from ..losses import LossBundle, total_loss
from ..optim.adam import AdamState, adam_step
from ..optim.params import ParamStore
from ..recording import TrainingRecorder
from ..renderers.components import compose_enhanced, compose_low, render_backward, render_components
from ..scene.decoders import mean_opacity
from ..scene.model import SceneModel
from .base import StageHistory, TrainingStage
from .config import TrainConfig
from .dataset import Dataset, View

logger = logging.getLogger(__name__)


def view_schedule(views: List[View], seed: int) -> Iterator[View]:
    """Endless round-robin over ``views``, reshuffled with a seeded generator every pass."""
    rng = np.random.default_rng(seed)
    while True:
        for index in rng.permutation(len(views)):
            yield views[int(index)]


def transient_index(view: View, cfg: TrainConfig) -> int | None:
    return view.embedding_index if cfg.transient else None


def step_loss(model: SceneModel, view: View, iteration: int, cfg: TrainConfig, *, backward: bool = True) -> LossBundle:
    maps = render_components(model, view.camera, transient_index(view, cfg))
    prior = None if view.prior is None else view.prior.data
    bundle = total_loss(maps, view.low.data, prior, iteration, cfg)
    if backward and math.isfinite(bundle.total):
        render_backward(model, maps, bundle.grads)
    return bundle


def _average(bundles: List[LossBundle]) -> LossBundle:
    n = len(bundles)
    return LossBundle(
        recon=sum(b.recon for b in bundles) / n,
        ill=sum(b.ill for b in bundles) / n,
        re=sum(b.re for b in bundles) / n,
        enh=sum(b.enh for b in bundles) / n,
        depth=0.0,
        total=sum(b.total for b in bundles) / n,
        weights=bundles[0].weights,
    )


def _bad_groups(store: ParamStore) -> Set[str]:
    return {
        p.group
        for p in store
        if not (np.all(np.isfinite(p.value)) and np.all(np.isfinite(p.grad)))
    }


class PipelineObjective:
    """
    Total loss of one view as a function of the store, for the gradient oracle.

    The first call records every discrete decision and accumulates the analytic gradient;
    later calls replay the decisions and only evaluate.
    """

    def __init__(self, model: SceneModel, view: View, iteration: int, cfg: TrainConfig) -> None:
        self.model = model
        self.view = view
        self.iteration = iteration
        self.cfg = cfg
        self.branches = BranchCache()
        self.calls = 0

    def __call__(self, store: ParamStore) -> float:
        if store is not self.model.store:
            raise ValueError("The objective evaluates its own model's parameters.")
        if self.calls:
            self.branches.replay()
        self.calls += 1
        index = transient_index(self.view, self.cfg)
        maps = render_components(self.model, self.view.camera, index, branches=self.branches)
        prior = None if self.view.prior is None else self.view.prior.data
        bundle = total_loss(maps, self.view.low.data, prior, self.iteration, self.cfg, branches=self.branches)
        if self.calls == 1:
            render_backward(self.model, maps, bundle.grads)
        return bundle.total


class Decomposition(TrainingStage):
    name = "decomposition"

    def __init__(
        self,
        dataset: Dataset,
        cfg: TrainConfig,
        *,
        preview_dir: str | Path | None = None,
        progress: bool = False,
    ) -> None:
        self.dataset = dataset
        self.cfg = cfg
        self.preview_dir = None if preview_dir is None else Path(preview_dir)
        self.progress = progress
        self.adam = AdamState()
        self.lr_scale: Dict[str, float] = {}

    def _rollback(self, model: SceneModel, snapshot, groups: Set[str], iteration: int, recorder) -> None:
        values, adam = snapshot
        model.store.load_state_dict(values)
        model.store.zero_grad()
        self.adam = adam.copy()
        halved = []
        for group in sorted(groups or set(self.cfg.base_lrs())):
            if group not in self.lr_scale:
                self.lr_scale[group] = 0.5
                halved.append(group)
        logger.warning("Iteration %d rolled back; halved learning rate of %s", iteration, halved or "no group")
        if recorder is not None:
            recorder.record("train", "rollback", iteration=iteration, groups=sorted(groups), halved=halved)

    def _cull(self, model: SceneModel, iteration: int, recorder) -> int:
        cams = [v.camera for v in self.dataset.train_views]
        alive = mean_opacity(model, cams) >= self.cfg.opacity_floor
        if alive.all() or not alive.any():
            return 0
        removed = model.keep_anchors(alive, self.adam)
        logger.info("Iteration %d: removed %d low-opacity anchors", iteration, removed)
        if recorder is not None:
            recorder.record("train", "cull", iteration=iteration, removed=removed, remaining=model.num_anchors)
        return removed

    def _preview(self, model: SceneModel, iteration: int) -> None:
        view = self.dataset.train_views[0]
        maps = render_components(model, view.camera)
        for label, data in (("enhanced", compose_enhanced(maps)), ("low", compose_low(maps))):
            path = self.preview_dir / f"{label}_{iteration:05d}.png"
            write_png(path, Image(np.nan_to_num(np.clip(data, 0.0, 1.0))))

    def _optimize(self, model: SceneModel, *, recorder: TrainingRecorder | None = None) -> StageHistory:
        history = StageHistory()
        views = self.dataset.train_views
        if not views or self.cfg.iterations == 0:
            return history
        order = view_schedule(views, self.cfg.seed)
        iteration = 0
        failures = 0
        progress = tqdm(total=self.cfg.iterations, desc="decomposition", disable=not self.progress)
        batch = [next(order) for _ in range(self.cfg.views_per_step)]
        while iteration < self.cfg.iterations:
            snapshot = (model.store.state_dict(), self.adam.copy())
            model.store.zero_grad()
            bundles = [step_loss(model, view, iteration, self.cfg) for view in batch]
            bundle = bundles[0] if len(bundles) == 1 else _average(bundles)
            if len(bundles) > 1:
                for param in model.store:
                    param.grad /= len(bundles)
            bad = _bad_groups(model.store)
            if math.isfinite(bundle.total):
                adam_step(model.store, self.adam, self.cfg.learning_rates(iteration, self.lr_scale))
                bad |= {p.group for p in model.store if not np.all(np.isfinite(p.value))}
            if not math.isfinite(bundle.total) or not model.all_finite():
                failures += 1
                history.rollbacks += 1
                self._rollback(model, snapshot, bad, iteration, recorder)
                if failures >= self.cfg.max_failures:
                    raise NumericalAbort(
                        f"{failures} consecutive non-finite iterations at iteration {iteration}", iteration
                    )
                continue
            failures = 0
            history.losses.append(bundle.total)
            if recorder is not None and iteration % self.cfg.log_every == 0:
                names = [v.name for v in batch]
                recorder.record("train", "step", iteration=iteration, view=",".join(names), **bundle.to_dict())
            logger.debug("iter %d total %.6f", iteration, bundle.total)
            iteration += 1
            progress.update(1)
            batch = [next(order) for _ in range(self.cfg.views_per_step)]
            if self.cfg.opacity_cull and iteration % self.cfg.cull_every == 0:
                history.culled += self._cull(model, iteration, recorder)
            if self.preview_dir is not None and iteration % self.cfg.preview_every == 0:
                self._preview(model, iteration)
        progress.close()
        return history
