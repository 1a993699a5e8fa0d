import json

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from llgs.errors import DataError
from llgs.exporters import read_anchor_set, write_anchor_set, write_eval_report
from llgs.geometry import Image
from llgs.images import write_png
from llgs.llgim import AnchorSet, PruneRound
from llgs.losses import dssim
from llgs.metrics import affine_align_luminance, align_lab, evaluate_directories, fit_affine, psnr, score, ssim


def random_image(seed, shape=(16, 16, 3), low=0.05, high=0.95):
    return Image(np.random.default_rng(seed).uniform(low, high, shape))


def test_planted_luminance_affinity_is_recovered():
    rng = np.random.default_rng(0)
    ref = np.stack([rng.uniform(10, 90, (8, 8)), rng.uniform(-20, 20, (8, 8)), rng.uniform(-20, 20, (8, 8))], axis=-1)
    pred = ref.copy()
    pred[..., 0] = 2.0 * ref[..., 0] + 3.0
    out, a, b, aligned = align_lab(pred, ref)
    assert aligned
    assert a == pytest.approx(2.0, abs=1e-6) and b == pytest.approx(3.0, abs=1e-6)
    np.testing.assert_allclose(out[..., 0], ref[..., 0], atol=1e-6)
    np.testing.assert_array_equal(out[..., 1:], pred[..., 1:])


def test_identity_alignment():
    image = random_image(1)
    result = affine_align_luminance(image, image)
    assert result.aligned
    assert result.a == pytest.approx(1.0, abs=1e-9) and result.b == pytest.approx(0.0, abs=1e-7)
    np.testing.assert_allclose(result.image.data, image.data, atol=1e-5)


def test_degenerate_alignment_is_skipped():
    pred = random_image(2)
    flat = Image(np.full((16, 16, 3), 0.5))
    result = affine_align_luminance(pred, flat)
    assert not result.aligned
    assert (result.a, result.b) == (1.0, 0.0)
    assert result.image is pred
    assert fit_affine(np.ones(4), np.arange(4.0)) is None
    assert fit_affine(np.arange(4.0), np.full(4, 2.0)) is None


def test_alignment_input_validation():
    with pytest.raises(DataError):
        affine_align_luminance(random_image(3), random_image(3, shape=(8, 8, 3)))
    with pytest.raises(DataError):
        affine_align_luminance(random_image(3, shape=(8, 8, 1)), random_image(4, shape=(8, 8, 1)))


def test_psnr_examples():
    a = np.full((4, 4, 3), 0.3)
    assert psnr(a, a) == 99.0
    assert psnr(a, a + 0.1) == pytest.approx(20.0)
    assert psnr(a, a + 0.5) == pytest.approx(6.0206, abs=1e-4)
    with pytest.raises(DataError):
        psnr(a, np.zeros((4, 4, 1)))


def test_ssim_examples():
    image = random_image(5, shape=(32, 32, 3))
    assert ssim(image, image) == pytest.approx(1.0)
    noise_a = random_image(6, shape=(64, 64, 1), low=0.0, high=1.0)
    noise_b = random_image(7, shape=(64, 64, 1), low=0.0, high=1.0)
    assert abs(ssim(noise_a, noise_b)) < 0.1


def test_alignment_improves_a_brightened_prediction():
    ref = random_image(8, shape=(24, 24, 3), low=0.1, high=0.5)
    brighter = Image(np.clip(ref.data * 1.6, 0.0, 1.0))
    plain = score(brighter, ref, align=False)
    aligned = score(brighter, ref, align=True)
    assert aligned.aligned and plain.aligned is False
    assert aligned.psnr > plain.psnr


def test_evaluate_directories(tmp_path):
    pred_dir, ref_dir = tmp_path / "pred", tmp_path / "ref"
    for index in range(2):
        image = random_image(10 + index)
        write_png(pred_dir / f"{index:03d}.png", image)
        write_png(ref_dir / f"{index:03d}.png", image)
    write_png(pred_dir / "extra.png", random_image(20))
    report = evaluate_directories(pred_dir, ref_dir, align=False)
    assert sorted(report["views"]) == ["000", "001"]
    assert report["views"]["000"]["psnr"] == 99.0
    assert set(report["views"]["001"]) == {"psnr", "ssim", "a", "b", "aligned"}
    assert report["mean"]["ssim"] == pytest.approx(1.0)
    with pytest.raises(DataError):
        evaluate_directories(pred_dir, tmp_path / "empty")


def test_anchor_set_file_round_trip(tmp_path):
    anchors = AnchorSet(
        np.array([[0.5, 0.5, 0.5], [1.5, 0.5, -0.5]]),
        1.0,
        np.array([3, 7]),
        (PruneRound(1, 0.5, 4, 2, 0.25),),
    )
    path = write_anchor_set(tmp_path / "anchors.json", anchors, thresholds=[0.5])
    payload = json.loads(path.read_text())
    assert payload["count"] == 2 and payload["thresholds"] == [0.5]
    loaded = read_anchor_set(path)
    np.testing.assert_array_equal(loaded.positions, anchors.positions)
    np.testing.assert_array_equal(loaded.ids, [3, 7])
    assert loaded.rounds == anchors.rounds
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(DataError):
        read_anchor_set(tmp_path / "broken.json")
    with pytest.raises(DataError):
        read_anchor_set(tmp_path / "missing.json")


def test_eval_report_records_alignment_mode(tmp_path):
    path = write_eval_report(tmp_path / "eval.json", {"views": {}, "mean": {"psnr": 20.0, "ssim": 0.5}}, align=True)
    payload = json.loads(path.read_text())
    assert payload["aligned"] is True
    assert payload["mean"] == {"psnr": 20.0, "ssim": 0.5}


def test_dssim_is_half_the_ssim_deficit():
    a = random_image(30, shape=(20, 20, 3)).data
    b = random_image(31, shape=(20, 20, 3)).data
    assert dssim(a, b).value == pytest.approx((1.0 - ssim(a, b)) / 2.0, abs=1e-12)


@pytest.mark.parametrize("shape", [(24, 20, 1), (32, 32, 3)])
def test_ssim_agrees_with_scikit_image(shape):
    a = random_image(40, shape=shape, low=0.0, high=1.0).data
    b = np.clip(a + np.random.default_rng(41).normal(0.0, 0.1, shape), 0.0, 1.0)
    expected = structural_similarity(
        a,
        b,
        data_range=1.0,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
        channel_axis=-1,
    )
    assert ssim(a, b) == pytest.approx(expected, abs=1e-8)
