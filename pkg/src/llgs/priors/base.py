"""Base interface for prior-image providers."""

from __future__ import annotations

from abc import ABC, abstractmethod

from ..geometry import Image


class PriorProvider(ABC):
    """Turns a low-light view into the normal-light prior image used by the enhancement loss."""

    name: str = "prior"

    def provide(self, low: Image, *, view: str | None = None) -> Image:
        prior = self._produce(low, view=view)
        if prior.shape != low.shape:
            raise ValueError(
                f"{self.name} prior has shape {prior.shape}, expected {low.shape}."
            )
        return prior

    @abstractmethod
    def _produce(self, low: Image, *, view: str | None = None) -> Image:
        """Return the prior image for ``low``."""
