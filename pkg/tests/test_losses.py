import numpy as np
import pytest

from llgs.branches import BranchCache
from llgs.errors import DataError
from llgs.losses import (
    depth_pcc_loss,
    dssim,
    enhancement_loss,
    illum_prior_loss,
    init_illum_loss,
    l1_weighted,
    recon_loss,
    residual_loss,
    smoothness_loss,
    smoothness_weights,
    total_loss,
)
from llgs.renderers import render_components
from llgs.training import TrainConfig


def full(value, shape=(12, 12, 3)):
    return np.full(shape, value, dtype=np.float64)


def checker(size=16, cell=1):
    rows, cols = np.indices((size, size))
    return (((rows // cell) + (cols // cell)) % 2).astype(np.float64)[..., None].repeat(3, axis=2)


def test_l1_weighted_examples():
    assert l1_weighted(full(0.3), full(0.3)).value == 0.0
    term = l1_weighted(full(0.1, (1, 1, 1)), full(0.2, (1, 1, 1)))
    assert term.value == pytest.approx(0.1 / 0.101)
    assert term.grad[0, 0, 0] == pytest.approx(-1.0 / 0.101)


def test_l1_weighted_shape_mismatch():
    with pytest.raises(DataError):
        l1_weighted(full(0.1), full(0.1, (12, 12, 1)))


def test_dssim_examples():
    image = np.random.default_rng(0).uniform(0, 1, (16, 16, 3))
    assert dssim(image, image).value == pytest.approx(0.0, abs=1e-12)
    assert dssim(full(0.4), full(0.4)).value == pytest.approx(0.0, abs=1e-12)
    assert dssim(checker(), 1.0 - checker()).value > 0.95


def test_dssim_needs_full_window():
    with pytest.raises(DataError):
        dssim(full(0.1, (8, 8, 3)), full(0.1, (8, 8, 3)))


def test_dssim_gradient_matches_finite_difference():
    rng = np.random.default_rng(1)
    a = rng.uniform(0.2, 0.8, (12, 12, 1))
    b = rng.uniform(0.2, 0.8, (12, 12, 1))
    grad = dssim(a, b).grad
    h = 1e-6
    for index in [(0, 0, 0), (5, 6, 0), (11, 3, 0)]:
        plus, minus = a.copy(), a.copy()
        plus[index] += h
        minus[index] -= h
        numeric = (dssim(plus, b).value - dssim(minus, b).value) / (2 * h)
        assert grad[index] == pytest.approx(numeric, rel=1e-5, abs=1e-9)


def test_recon_loss():
    target = np.random.default_rng(2).uniform(0.1, 0.5, (12, 12, 3))
    assert recon_loss(target, np.zeros_like(target), target).value == pytest.approx(0.0, abs=1e-12)
    low = target + 0.05
    plain = l1_weighted(low, target).value
    assert recon_loss(low, np.zeros_like(low), target, lam=0.0).value == plain


def test_smoothness_weights():
    w_x, w_y = smoothness_weights(full(0.5, (8, 8, 1)))
    np.testing.assert_allclose(w_x[:, :-1], 100.0)
    np.testing.assert_allclose(w_y[:-1], 100.0)
    assert np.all(w_x[:, -1] == 0.0) and np.all(w_y[-1] == 0.0)

    ramp = (0.09 * np.arange(12, dtype=np.float64))[None, :, None].repeat(6, axis=0)
    w_x, _ = smoothness_weights(ramp)
    np.testing.assert_allclose(w_x[:, 2:8], 10.0, rtol=1e-9)

    edge = np.zeros((8, 12, 1))
    edge[:, 6:] = 1.0
    w_x, _ = smoothness_weights(edge)
    assert w_x[4, 5, 0] < w_x[4, 0, 0]
    assert w_x[4, 5, 0] < 5.0


def test_smoothness_loss():
    ones = (np.ones((1, 4, 1)), np.ones((1, 4, 1)))
    assert smoothness_loss(full(0.2, (1, 4, 1)), ones).value == 0.0
    step = np.array([0.0, 0.0, 0.5, 0.5])[None, :, None]
    assert smoothness_loss(step, ones).value == pytest.approx(0.5 / 4)


def test_init_illum_loss():
    pixel = np.array([[[0.1, 0.3, 0.2]]])
    assert init_illum_loss(np.array([[[0.3]]]), pixel).value == pytest.approx(0.0)
    assert init_illum_loss(np.array([[[0.5]]]), pixel).value == pytest.approx(0.2)


def test_illum_prior_loss_combines_terms():
    low = np.random.default_rng(3).uniform(0.0, 0.4, (8, 8, 3))
    s = low.max(axis=2, keepdims=True)
    assert illum_prior_loss(s, low, lambda_smo=0.0).value == pytest.approx(0.0, abs=1e-15)
    smooth = smoothness_loss(s, smoothness_weights((low @ [0.299, 0.587, 0.114])[..., None]))
    assert illum_prior_loss(s, low, lambda_smo=0.001).value == pytest.approx(0.001 * smooth.value)


def test_residual_loss():
    assert residual_loss(full(0.0)).value == 0.0
    assert residual_loss(full(0.1)).value == pytest.approx(0.1)
    assert residual_loss(full(-0.1)).value == pytest.approx(0.1)


def test_enhancement_loss():
    s = full(0.1, (2, 2, 1))
    prior = full(0.3, (2, 2, 3))
    exact = enhancement_loss(s, full(4.0 * 0.101, (2, 2, 3)), prior, prior, gamma=4.0)
    assert exact.value == pytest.approx(0.0, abs=1e-12)
    term = enhancement_loss(s, full(0.5, (2, 2, 3)), prior, prior, gamma=4.0)
    assert term.value == pytest.approx(0.9505, abs=1e-4)
    assert not term.grad_enhanced.any()
    assert np.all(term.grad_enhanced_illumination > 0.0)
    off_prior = enhancement_loss(s, full(4.0 * 0.101, (2, 2, 3)), prior + 0.1, prior, gamma=4.0)
    assert off_prior.value == pytest.approx(0.1, abs=1e-12)


def test_depth_pcc_examples():
    rendered = np.random.default_rng(4).uniform(1.0, 5.0, (8, 8, 1))
    assert depth_pcc_loss(rendered, rendered).value == pytest.approx(0.0, abs=1e-12)
    assert depth_pcc_loss(rendered, -rendered).value == pytest.approx(2.0, abs=1e-12)
    assert depth_pcc_loss(rendered, 3.0 * rendered + 7.0).value == pytest.approx(0.0, abs=1e-12)


def test_depth_pcc_bounds_and_gradient():
    rng = np.random.default_rng(5)
    rendered = rng.uniform(1.0, 5.0, (6, 6, 1))
    prior = rng.uniform(1.0, 5.0, (6, 6, 1))
    term = depth_pcc_loss(rendered, prior)
    assert 0.0 <= term.value <= 2.0
    h = 1e-6
    plus, minus = rendered.copy(), rendered.copy()
    plus[2, 3, 0] += h
    minus[2, 3, 0] -= h
    numeric = (depth_pcc_loss(plus, prior).value - depth_pcc_loss(minus, prior).value) / (2 * h)
    assert term.grad[2, 3, 0] == pytest.approx(numeric, rel=1e-5)


def test_depth_pcc_skips_constant_and_uncovered_inputs():
    prior = np.random.default_rng(6).uniform(1.0, 5.0, (4, 4, 1))
    constant = depth_pcc_loss(full(2.0, (4, 4, 1)), prior)
    assert constant.skipped and constant.value == 0.0 and not constant.grad.any()
    uncovered = depth_pcc_loss(prior, prior * 2.0, alpha=np.zeros((4, 4, 1)))
    assert uncovered.skipped


def test_depth_pcc_mask_replays():
    rng = np.random.default_rng(7)
    rendered = rng.uniform(1.0, 5.0, (4, 4, 1))
    prior = rng.uniform(1.0, 5.0, (4, 4, 1))
    alpha = rng.uniform(0.0, 1.0, (4, 4, 1))
    cache = BranchCache()
    first = depth_pcc_loss(rendered, prior, alpha, branches=cache)
    flipped = 1.0 - alpha
    again = depth_pcc_loss(rendered, prior, flipped, branches=cache.replay())
    assert again.value == first.value


def test_total_loss_weights_and_grads(tiny_model, tiny_dataset):
    view = tiny_dataset.views[0]
    maps = render_components(tiny_model, view.camera, 0)
    cfg = TrainConfig()
    bundle = total_loss(maps, view.low.data, view.prior.data, 0, cfg)
    assert (bundle.weights.ill, bundle.weights.re, bundle.weights.enh) == (1.0, 2.0, 0.0)
    expected = bundle.recon + bundle.ill + 2.0 * bundle.re
    assert bundle.total == pytest.approx(expected)
    assert "enhanced_illumination" not in bundle.grads
    assert set(bundle.to_dict()) == {"recon", "ill", "re", "enh", "depth", "total", "weights"}

    late = total_loss(maps, view.low.data, view.prior.data, 2000, cfg)
    assert late.weights.enh == 1.0
    assert "enhanced_illumination" in late.grads
    assert late.total == pytest.approx(late.recon + late.ill + late.weights.re * late.re + late.enh)


def test_plain_l1_is_mean_absolute_error():
    rng = np.random.default_rng(5)
    pred, target = rng.uniform(0, 1, (6, 6, 3)), rng.uniform(0, 1, (6, 6, 3))
    term = l1_weighted(pred, target, weighted=False)
    assert term.value == pytest.approx(float(np.mean(np.abs(pred - target))))
    np.testing.assert_allclose(term.grad, np.sign(pred - target) / pred.size)
    assert term.value != pytest.approx(l1_weighted(pred, target).value)


def test_total_loss_uses_plain_l1_when_weighting_is_off(tiny_model, tiny_dataset):
    view = tiny_dataset.views[0]
    maps = render_components(tiny_model, view.camera, 0)
    cfg = TrainConfig(weighted_l1=False, lambda_dssim=0.0)
    bundle = total_loss(maps, view.low.data, None, 0, cfg)
    low = maps.reflectance * maps.illumination + maps.residual
    assert bundle.recon == pytest.approx(float(np.mean(np.abs(low - view.low.data))))
