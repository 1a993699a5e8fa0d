from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from llgs.geometry import Camera, Image
from llgs.llgim import AnchorSet
from llgs.scene import ModelConfig, SceneModel
from llgs.scene.model import FEATURE_INTRINSIC, FEATURE_TRANSIENT
from llgs.synth import SynthSpec
from llgs.training import Dataset, View

FIXTURE_SIZE = 16
GOLDEN_DIR = Path(__file__).parent / "data"


def ring(count: int, *, radius: float = 3.0, size: int = FIXTURE_SIZE, focal: float = 20.0, spread: float = 0.35):
    angles = [spread * (i - (count - 1) / 2) for i in range(count)]
    return [
        Camera.look_at(
            (radius * np.sin(a), -0.5, -radius * np.cos(a)),
            (0.0, 0.0, 0.0),
            focal=focal,
            width=size,
            height=size,
        )
        for a in angles
    ]


@pytest.fixture
def cameras():
    return ring(3)


@pytest.fixture
def tiny_model():
    """Two anchors with four Gaussians each: eight Gaussians per branch."""
    anchors = AnchorSet(np.array([[-0.25, 0.0, 0.0], [0.25, 0.1, 0.1]]), 1.0, np.arange(2))
    config = ModelConfig(gaussians_per_anchor=4, feature_dim=6, hidden_dim=8, embedding_dim=3)
    model = SceneModel.from_anchors(anchors, 3, config, seed=7)
    rng = np.random.default_rng(3)
    model.store.set_value(FEATURE_INTRINSIC, rng.normal(0.0, 0.5, (2, 6)))
    model.store.set_value(FEATURE_TRANSIENT, rng.normal(0.0, 0.5, (2, 6)))
    return model


@pytest.fixture
def tiny_dataset(cameras):
    rng = np.random.default_rng(11)
    views = []
    for index, cam in enumerate(cameras):
        low = Image(rng.uniform(0.05, 0.4, (FIXTURE_SIZE, FIXTURE_SIZE, 3)))
        prior = Image(rng.uniform(0.2, 0.9, (FIXTURE_SIZE, FIXTURE_SIZE, 3)))
        views.append(View(f"v{index}", cam, low, prior))
    return Dataset.build(views)


@pytest.fixture
def small_spec():
    return SynthSpec(width=24, height=24, focal=24.0, views=3, test_views=1, cloud_points=1500)


@pytest.fixture
def golden():
    """
    Compare an array with its frozen copy in ``tests/data``.

    A missing file is recorded and the test skipped; ``LLGS_UPDATE_GOLDEN=1`` re-records.
    """

    def check(name: str, actual, *, atol: float = 0.0) -> None:
        path = GOLDEN_DIR / f"{name}.npy"
        actual = np.asarray(actual)
        if os.environ.get("LLGS_UPDATE_GOLDEN") or not path.exists():
            GOLDEN_DIR.mkdir(exist_ok=True)
            np.save(path, actual)
            pytest.skip(f"recorded {path.name}")
        expected = np.load(path)
        assert actual.shape == expected.shape
        np.testing.assert_allclose(actual, expected, rtol=0.0, atol=atol)

    return check
