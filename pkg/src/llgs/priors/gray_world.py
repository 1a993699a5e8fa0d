from __future__ import annotations

import numpy as np

from ..geometry import Image
from .base import PriorProvider


def gray_world(data: np.ndarray) -> np.ndarray:
    """Scale every channel so all channel means equal their average; empty channels stay put."""
    means = data.reshape(-1, data.shape[2]).mean(axis=0)
    target = means.mean()
    gains = np.divide(target, means, out=np.ones_like(means), where=means > 0.0)
    return data * gains


class GrayWorldPrior(PriorProvider):
    """Brighten by ``gamma``, white-balance with the gray-world assumption, clip to [0, 1]."""

    name = "gray-world"

    def __init__(self, gamma: float = 4.0) -> None:
        if gamma <= 0:
            raise ValueError("gamma must be positive.")
        self.gamma = gamma

    def _produce(self, low: Image, *, view: str | None = None) -> Image:
        return Image(np.clip(gray_world(self.gamma * low.data), 0.0, 1.0))


def prior_provider(low: Image, gamma: float) -> Image:
    return GrayWorldPrior(gamma).provide(low)
