"""End-to-end gradient checks of the hand-written backward passes against central differences."""

import numpy as np
import pytest

from llgs.branches import BranchCache
from llgs.losses import depth_pcc_loss
from llgs.optim import finite_difference_check
from llgs.renderers import render_backward, render_components
from llgs.scene.model import OFFSETS_INTRINSIC, POSITION
from llgs.training import PipelineObjective, TrainConfig

TOLERANCE = 1e-3
FLOOR = 1e-4


def assert_gradients_match(report, minimum):
    assert len(report.accepted) >= minimum
    worst = report.worst(3)
    assert report.max_relative_error < TOLERANCE, worst


@pytest.mark.parametrize("iteration", [0, 2500])
def test_pipeline_gradient_on_training_view(tiny_model, tiny_dataset, iteration):
    view = tiny_dataset.train_views[0]
    objective = PipelineObjective(tiny_model, view, iteration, TrainConfig())
    report = finite_difference_check(objective, tiny_model.store, step=1e-4, samples=200, seed=1, floor=FLOOR)
    assert report.names == sorted(tiny_model.store.names())
    assert_gradients_match(report, 190)


def test_pipeline_gradient_reaches_tone_map_only_after_switch(tiny_model, tiny_dataset):
    view = tiny_dataset.train_views[1]
    early = PipelineObjective(tiny_model, view, 100, TrainConfig())
    tiny_model.store.zero_grad()
    early(tiny_model.store)
    assert not tiny_model.store.grad("mlp.tone_map.W2").any()
    tiny_model.store.zero_grad()
    late = PipelineObjective(tiny_model, view, 2000, TrainConfig())
    late(tiny_model.store)
    assert tiny_model.store.grad("mlp.tone_map.W2").any()
    tiny_model.store.zero_grad()


def test_pipeline_objective_rejects_foreign_store(tiny_model, tiny_dataset):
    objective = PipelineObjective(tiny_model, tiny_dataset.train_views[0], 0, TrainConfig())
    with pytest.raises(ValueError):
        objective(tiny_model.store.copy())


def test_depth_correlation_gradient(tiny_model, cameras):
    rng = np.random.default_rng(12)
    prior = rng.uniform(1.0, 4.0, (cameras[0].height, cameras[0].width, 1))
    # dense enough that some pixels are covered
    tiny_model.store["mlp.opacity.b2"][:] = 3.0
    branches = BranchCache()
    calls = []

    def objective(store):
        if calls:
            branches.replay()
        calls.append(None)
        maps = render_components(tiny_model, cameras[0], branches=branches)
        term = depth_pcc_loss(maps.depth, prior, maps.alpha, branches=branches)
        assert not term.skipped
        if len(calls) == 1:
            render_backward(tiny_model, maps, {"depth": term.grad})
        return term.value

    report = finite_difference_check(
        objective, tiny_model.store, samples=60, seed=2, names=[POSITION, OFFSETS_INTRINSIC], floor=FLOOR
    )
    assert report.names == sorted([POSITION, OFFSETS_INTRINSIC])
    assert_gradients_match(report, 25)


def test_zero_adjoints_give_zero_gradients(tiny_model, cameras):
    maps = render_components(tiny_model, cameras[0], 0)
    tiny_model.store.zero_grad()
    render_backward(tiny_model, maps, {})
    assert all(not p.grad.any() for p in tiny_model.store)
