import math

import numpy as np
import pytest

from llgs.errors import ConfigError, DataError, NumericalAbort
from llgs.geometry import Image
from llgs.recording import TrainingRecorder, read_log
from llgs.renderers import render_components
from llgs.scene import save_checkpoint
from llgs.scene import model as model_names
from llgs.training import (
    Dataset,
    DepthWarmup,
    TrainConfig,
    View,
    depth_warmup_refine,
    lambda_schedule,
    load_config,
    train,
    view_schedule,
)
from llgs.training import decomposition

FIXTURE_SIZE = 16


def short(**overrides):
    values = {"iterations": 4, "warmup_iters": 0, "log_every": 1, "preview_every": 1000}
    values.update(overrides)
    return TrainConfig(**values)


# ---------------------------------------------------------------------------
# schedules and configuration


@pytest.mark.parametrize(
    "iteration, expected",
    [
        (0, (1.0, 2.0, 0.0, 0.2)),
        (1000, (1.0, 1.25, 0.0, 0.2)),
        (2000, (1.0, 0.5, 1.0, 0.2)),
        (7999, (1.0, 0.5, 1.0, 0.2)),
    ],
)
def test_lambda_schedule(iteration, expected):
    assert lambda_schedule(iteration, TrainConfig()).as_tuple() == pytest.approx(expected)


def test_learning_rates_follow_groups_and_schedule():
    cfg = TrainConfig()
    early = cfg.learning_rates(0)
    assert "tone_map" not in early and "position" not in early
    assert early["decoder.decomposition"] == pytest.approx(0.4)
    late = cfg.learning_rates(2000)
    assert "tone_map" in late
    end = cfg.learning_rates(cfg.iterations)
    assert end["offset.intrinsic"] == pytest.approx(1e-5)
    assert end["feature"] == early["feature"] == pytest.approx(7.5e-3)
    assert cfg.learning_rates(0, {"feature": 0.5})["feature"] == pytest.approx(3.75e-3)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(iterations=-1)
    with pytest.raises(ConfigError):
        TrainConfig(lr_features=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(views_per_step=0)


def test_load_config_resolves_paths(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        "[model]\ngaussians_per_anchor = 4\n\n"
        "[train]\niterations = 10\ngamma = 3.0\n\n"
        '[data]\ndataset = "scene"\nvoxel = 0.5\n\n'
        "[data.prune]\ntau0 = 0.5\nrounds = 2\n\n"
        '[output]\ndirectory = "out"\n'
    )
    config = load_config(path)
    assert config.model.gaussians_per_anchor == 4
    assert config.train.iterations == 10 and config.train.gamma == 3.0
    assert config.data.dataset == str((tmp_path / "scene").resolve())
    assert config.data.prune.tau0 == 0.5 and config.data.prune.rounds == 2
    assert config.output.directory == str((tmp_path / "out").resolve())
    seeded = config.with_seed(9)
    assert seeded.train.seed == 9 and seeded.data.prune.seed == 9


@pytest.mark.parametrize(
    "text",
    [
        "[train]\nlearning_rate = 1.0\n",
        "[extras]\nx = 1\n",
        "[train]\niterations = -5\n",
        "[train\n",
    ],
)
def test_bad_configs_are_config_errors(tmp_path, text):
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


# ---------------------------------------------------------------------------
# dataset


def test_dataset_binds_embeddings_in_order(cameras):
    low = Image(np.full((FIXTURE_SIZE, FIXTURE_SIZE, 3), 0.1))
    views = [
        View("a", cameras[0], low, low),
        View("b", cameras[1], low, split="test"),
        View("c", cameras[2], low, low),
    ]
    dataset = Dataset.build(views)
    assert [v.embedding_index for v in dataset] == [0, None, 1]
    assert [v.name for v in dataset.test_views] == ["b"]
    assert dataset.by_name("c").embedding_index == 1
    with pytest.raises(DataError):
        dataset.by_name("missing")


def test_dataset_validation(cameras):
    low = Image(np.full((FIXTURE_SIZE, FIXTURE_SIZE, 3), 0.1))
    with pytest.raises(DataError):
        Dataset.build([View("a", cameras[0], low, low), View("a", cameras[1], low, low)])
    with pytest.raises(DataError):
        Dataset.build([View("a", cameras[0], low)])
    with pytest.raises(DataError):
        View("a", cameras[0], Image(np.zeros((4, 4, 3))))
    with pytest.raises(DataError):
        View("a", cameras[0], low, Image(np.zeros((FIXTURE_SIZE, FIXTURE_SIZE, 1))))


def test_view_schedule_visits_every_view_each_pass(tiny_dataset):
    order = view_schedule(tiny_dataset.train_views, seed=3)
    first = [next(order).name for _ in range(6)]
    assert sorted(first[:3]) == sorted(first[3:]) == ["v0", "v1", "v2"]
    again = view_schedule(tiny_dataset.train_views, seed=3)
    assert [next(again).name for _ in range(6)] == first


# ---------------------------------------------------------------------------
# depth warm-up


def opaque(model):
    model.store["mlp.opacity.b2"][:] = 3.0
    return model


@pytest.mark.parametrize("transform", [lambda d: d, lambda d: 3.0 * d + 7.0])
def test_warmup_is_a_no_op_when_prior_matches(tiny_model, cameras, transform):
    model = opaque(tiny_model)
    views = [(cam, Image(transform(render_components(model, cam).depth))) for cam in cameras]
    before = model.store.state_dict()
    recorder = TrainingRecorder()
    depth_warmup_refine(model, views, 20, 1e-3, recorder=recorder)
    for name, value in before.items():
        np.testing.assert_array_equal(model.store[name], value)
    steps = recorder.select("warmup", "step")
    assert len(steps) == 1
    assert steps[0].payload["depth"] == pytest.approx(0.0, abs=1e-10)


def test_warmup_reduces_depth_loss(tiny_model, cameras):
    model = opaque(tiny_model)
    views = [(cam, Image(render_components(model, cam).depth)) for cam in cameras]
    model.store["anchor.position"][0] += (0.0, 0.0, 0.5)
    result = DepthWarmup(views, 60, 5e-3).run(model)
    assert result.stats.iterations == 60
    assert result.improved


def test_warmup_skips_constant_priors(tiny_model, cameras):
    model = opaque(tiny_model)
    flat = Image(np.full((FIXTURE_SIZE, FIXTURE_SIZE, 1), 2.0))
    before = model.store.state_dict()
    result = DepthWarmup([(cameras[0], flat)], 5, 1e-3).run(model)
    assert result.stats.iterations == 0
    np.testing.assert_array_equal(model.store["anchor.position"], before["anchor.position"])


# ---------------------------------------------------------------------------
# decomposition


def test_zero_iterations_leave_the_model_unchanged(tiny_model, tiny_dataset):
    before = tiny_model.store.state_dict()
    result = train(tiny_model, tiny_dataset, short(iterations=0))
    for name, value in before.items():
        np.testing.assert_array_equal(tiny_model.store[name], value)
    assert result.stage("decomposition").stats.iterations == 0
    assert result.stage("warmup") is None


def test_training_log_is_complete(tmp_path, tiny_model, tiny_dataset):
    recorder = TrainingRecorder(tmp_path / "log.jsonl")
    result = train(tiny_model, tiny_dataset, short(iterations=5), recorder=recorder)
    assert result.model is tiny_model
    lines = read_log(tmp_path / "log.jsonl")
    assert (lines[0]["phase"], lines[0]["event"]) == ("run", "config")
    assert (lines[-1]["phase"], lines[-1]["event"]) == ("run", "done")
    steps = [line for line in lines if line["event"] == "step"]
    assert [s["iteration"] for s in steps] == list(range(5))
    for step in steps:
        assert set(step) >= {"recon", "ill", "re", "enh", "total", "weights", "view"}
        assert math.isfinite(step["total"])
    assert tiny_model.all_finite()


def test_training_is_deterministic(tmp_path, tiny_model, tiny_dataset):
    paths = []
    for run in range(2):
        model = tiny_model.copy()
        path = tmp_path / f"run{run}.llgs"
        train(model, tiny_dataset, short(iterations=3, seed=4), checkpoint=path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    untouched = save_checkpoint(tmp_path / "initial.llgs", tiny_model, meta={"iterations": 3, "seed": 4})
    assert untouched.read_bytes() != paths[0].read_bytes()


def test_multi_view_steps(tiny_model, tiny_dataset):
    recorder = TrainingRecorder()
    train(tiny_model, tiny_dataset, short(iterations=2, views_per_step=2), recorder=recorder)
    steps = recorder.select("train", "step")
    assert all(len(s.payload["view"].split(",")) == 2 for s in steps)


def test_non_finite_loss_rolls_back_once(monkeypatch, tiny_model, tiny_dataset):
    real = decomposition.step_loss
    calls = []

    def flaky(model, view, iteration, cfg, *, backward=True):
        bundle = real(model, view, iteration, cfg, backward=backward)
        calls.append(iteration)
        if len(calls) == 2:
            bundle.total = math.nan
        return bundle

    monkeypatch.setattr(decomposition, "step_loss", flaky)
    recorder = TrainingRecorder()
    result = train(tiny_model, tiny_dataset, short(iterations=3), recorder=recorder)
    assert calls == [0, 1, 1, 2]
    rollbacks = recorder.select("train", "rollback")
    assert len(rollbacks) == 1
    assert rollbacks[0].payload["iteration"] == 1
    assert "decoder.decomposition" in rollbacks[0].payload["halved"]
    assert result.stage("decomposition").stats.rollbacks == 1
    assert [e.payload["iteration"] for e in recorder.select("train", "step")] == [0, 1, 2]


def test_persistent_non_finite_loss_aborts(monkeypatch, tiny_model, tiny_dataset):
    real = decomposition.step_loss

    def broken(model, view, iteration, cfg, *, backward=True):
        bundle = real(model, view, iteration, cfg, backward=False)
        bundle.total = math.inf
        return bundle

    monkeypatch.setattr(decomposition, "step_loss", broken)
    before = tiny_model.store.state_dict()
    with pytest.raises(NumericalAbort) as info:
        train(tiny_model, tiny_dataset, short(iterations=3))
    assert info.value.iteration == 0
    for name, value in before.items():
        np.testing.assert_array_equal(tiny_model.store[name], value)


def test_previews_are_written(tmp_path, tiny_model, tiny_dataset):
    train(tiny_model, tiny_dataset, short(iterations=2, preview_every=2), preview_dir=tmp_path)
    assert (tmp_path / "enhanced_00002.png").exists()
    assert (tmp_path / "low_00002.png").exists()


def test_test_views_render_without_embeddings(tiny_model, tiny_dataset, cameras):
    train(tiny_model, tiny_dataset, short(iterations=2))
    maps = render_components(tiny_model, cameras[1])
    assert not maps.residual.any()
    with pytest.raises(DataError):
        render_components(tiny_model, cameras[1], 3)


def test_opacity_cull_removes_transparent_anchors(monkeypatch, tiny_model, tiny_dataset):
    monkeypatch.setattr(decomposition, "mean_opacity", lambda model, cams: np.array([0.5] + [0.0] * (model.num_anchors - 1)))
    recorder = TrainingRecorder()
    result = train(tiny_model, tiny_dataset, short(iterations=3, opacity_cull=True, cull_every=2), recorder=recorder)
    assert tiny_model.num_anchors == 1
    culls = recorder.select("train", "cull")
    assert [(e.payload["iteration"], e.payload["removed"]) for e in culls] == [(2, 1)]
    assert result.stage("decomposition").stats.culled == 1
    assert len(recorder.select("train", "step")) == 3
    assert tiny_model.all_finite()


# ---------------------------------------------------------------------------
# ablations

TRANSIENT_PARAMS = (
    model_names.OFFSETS_TRANSIENT,
    model_names.FEATURE_TRANSIENT,
    model_names.OPACITY_TRANSIENT,
    model_names.SCALE_ROT_TRANSIENT,
    model_names.RESIDUAL,
    model_names.EMBEDDING,
)


def is_transient(name):
    return any(name == prefix or name.startswith(prefix + ".") for prefix in TRANSIENT_PARAMS)


def test_without_transient_branch_rates_skip_its_groups():
    rates = TrainConfig(transient=False).learning_rates(2500)
    assert "offset.transient" not in rates and "embedding" not in rates
    assert "offset.intrinsic" in TrainConfig(transient=False).learning_rates(0)
    assert {"offset.transient", "embedding"} <= set(TrainConfig().learning_rates(0))


def test_without_transient_branch_residual_stays_zero(tiny_model, tiny_dataset):
    cfg = short(iterations=3, transient=False)
    view = tiny_dataset.views[1]
    assert decomposition.transient_index(view, cfg) is None
    assert decomposition.transient_index(view, short()) == view.embedding_index
    before = tiny_model.store.state_dict()
    train(tiny_model, tiny_dataset, cfg)
    transient = [name for name in before if is_transient(name)]
    assert transient
    for name in transient:
        np.testing.assert_array_equal(tiny_model.store[name], before[name])
    assert any(not np.array_equal(tiny_model.store[name], before[name]) for name in before if not is_transient(name))
    bundle = decomposition.step_loss(tiny_model, view, 3, cfg, backward=False)
    assert bundle.re == 0.0


def test_ablation_switches_load_from_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[train]\ntransient = false\nweighted_l1 = false\n\n[data.prune]\nenabled = false\n")
    config = load_config(path)
    assert config.train.transient is False and config.train.weighted_l1 is False
    assert config.data.prune.enabled is False
