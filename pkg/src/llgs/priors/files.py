from __future__ import annotations

from pathlib import Path

from ..errors import DataError
from ..geometry import Image
from ..images import read_png
from .base import PriorProvider


class FilePrior(PriorProvider):
    """Priors produced offline (for instance by a restoration network), read as ``<directory>/<view>.png``."""

    name = "files"

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)

    def _produce(self, low: Image, *, view: str | None = None) -> Image:
        if view is None:
            raise DataError("File priors are looked up by view name.")
        path = self.directory / f"{view}.png"
        if not path.exists():
            raise DataError(f"Missing prior image {path}")
        return read_png(path)
