"""Posed views with their low-light image, prior image and optional depth prior."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Sequence

from ..errors import DataError
from ..geometry import Camera, Image, load_cameras
from ..images import read_png, read_scalar_map
from ..priors import GrayWorldPrior, PriorProvider

logger = logging.getLogger(__name__)

Split = Literal["train", "test"]


@dataclass(frozen=True, slots=True)
class View:
    """
    One posed view. Training views carry ``embedding_index``, the row of the per-image
    embedding they bind to; test views have none.
    """

    name: str
    camera: Camera
    low: Image
    prior: Image | None = None
    depth_prior: Image | None = None
    split: Split = "train"
    embedding_index: int | None = None

    def __post_init__(self) -> None:
        if self.low.shape[:2] != (self.camera.height, self.camera.width):
            raise DataError(f"View '{self.name}': image size does not match the camera resolution.")
        if self.prior is not None and self.prior.shape != self.low.shape:
            raise DataError(f"View '{self.name}': prior image shape differs from the low-light image.")
        if self.depth_prior is not None and self.depth_prior.shape[:2] != self.low.shape[:2]:
            raise DataError(f"View '{self.name}': depth prior size differs from the image.")


class Dataset:
    """Views in file order; training views get embedding rows 0..V-1 in that order."""

    def __init__(self, views: Sequence[View]) -> None:
        names = [v.name for v in views]
        if len(set(names)) != len(names):
            raise DataError("View names must be unique.")
        self.views: List[View] = list(views)
        expected = 0
        for view in self.views:
            if view.split != "train":
                continue
            if view.prior is None:
                raise DataError(f"Training view '{view.name}' has no prior image.")
            if view.embedding_index != expected:
                raise DataError(f"Training view '{view.name}' should bind embedding {expected}.")
            expected += 1

    @classmethod
    def build(cls, views: Sequence[View]) -> "Dataset":
        """Assign embedding rows to the training views in order."""
        counter = 0
        bound = []
        for view in views:
            if view.split == "train":
                bound.append(View(view.name, view.camera, view.low, view.prior, view.depth_prior, "train", counter))
                counter += 1
            else:
                bound.append(View(view.name, view.camera, view.low, view.prior, view.depth_prior, view.split, None))
        return cls(bound)

    def __len__(self) -> int:
        return len(self.views)

    def __iter__(self):
        return iter(self.views)

    @property
    def train_views(self) -> List[View]:
        return [v for v in self.views if v.split == "train"]

    @property
    def test_views(self) -> List[View]:
        return [v for v in self.views if v.split == "test"]

    def by_name(self, name: str) -> View:
        for view in self.views:
            if view.name == name:
                return view
        raise DataError(f"No view named '{name}'.")


def _optional(path: Path, reader) -> Image | None:
    return reader(path) if path.exists() else None


def load_dataset(directory: str | Path, *, provider: PriorProvider | None = None, gamma: float = 4.0) -> Dataset:
    """
    Read a scene directory: ``cameras.json``, ``views/<name>.png``, optional
    ``priors/<name>.png`` and depth priors in ``depth/`` or ``gt/depth/``.

    Missing priors of training views come from ``provider`` (gray-world by default).
    """
    root = Path(directory)
    cameras = root / "cameras.json"
    if not cameras.exists():
        raise DataError(f"{root} has no cameras.json")
    provider = provider or GrayWorldPrior(gamma)
    views = []
    for entry in load_cameras(cameras):
        name = entry["name"]
        image_path = root / "views" / f"{name}.png"
        if not image_path.exists():
            raise DataError(f"Missing view image {image_path}")
        low = read_png(image_path)
        prior = _optional(root / "priors" / f"{name}.png", read_png)
        if prior is None and entry["split"] == "train":
            prior = provider.provide(low, view=name)
        depth = _optional(root / "depth" / f"{name}.png", read_scalar_map)
        if depth is None:
            depth = _optional(root / "gt" / "depth" / f"{name}.png", read_scalar_map)
        views.append(View(name, entry["camera"], low, prior, depth, entry["split"]))
    dataset = Dataset.build(views)
    logger.info(
        "Loaded %d views (%d train, %d test) from %s",
        len(dataset),
        len(dataset.train_views),
        len(dataset.test_views),
        root,
    )
    return dataset
