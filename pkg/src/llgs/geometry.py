"""
Core domain models shared by every stage of the pipeline.

Conventions used everywhere:
    * cameras are world-to-camera: x_cam = R @ x_world + t, +Z looks forward;
    * pixel origin is the top-left corner, u grows to the right, v grows down;
    * images are (H, W, C) float64 arrays, C in {1, 3}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .errors import DataError


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, slots=True)
class PointCloud:
    """
    Dense 3D positions, optionally coloured.

    Attributes:
        points: (N, 3) world coordinates.
        colors: optional (N, 3) colours in [0, 1].
    """

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise DataError("Point cloud contains non-finite coordinates.")
        object.__setattr__(self, "points", _readonly(points))
        if self.colors is not None:
            colors = np.array(self.colors, dtype=np.float64, copy=True).reshape(-1, 3)
            if len(colors) != len(points):
                raise DataError(
                    f"Point cloud has {len(points)} points but {len(colors)} colours."
                )
            if np.any(colors < 0.0) or np.any(colors > 1.0):
                raise DataError("Point colours must lie in [0, 1].")
            object.__setattr__(self, "colors", _readonly(colors))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_colors(self) -> bool:
        return self.colors is not None


@dataclass(frozen=True, slots=True)
class Projection:
    """Result of projecting one world point through a pinhole camera."""

    pixel: Tuple[float, float]
    depth: float

    @property
    def in_front(self) -> bool:
        """False for points behind or on the camera plane; callers must cull those."""
        return self.depth > 0.0


@dataclass(frozen=True, slots=True)
class Camera:
    """
    Posed pinhole camera without lens distortion.

    Attributes:
        fx, fy: focal lengths in pixels.
        cx, cy: principal point in pixels.
        rotation: world-to-camera rotation (3x3, orthonormal, det = +1).
        translation: world-to-camera translation.
        width, height: resolution in pixels.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(repr=False)
    translation: np.ndarray = field(repr=False)
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("Focal lengths must be positive.")
        if self.width <= 0 or self.height <= 0:
            raise DataError("Camera resolution must be positive.")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DataError(
                f"Principal point ({self.cx}, {self.cy}) lies outside a "
                f"{self.width}x{self.height} frame."
            )
        rotation = np.array(self.rotation, dtype=np.float64, copy=True).reshape(3, 3)
        translation = np.array(self.translation, dtype=np.float64, copy=True).reshape(3)
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > 1e-9:
            raise DataError("Camera rotation is not orthonormal.")
        if np.linalg.det(rotation) <= 0:
            raise DataError("Camera rotation must have determinant +1.")
        if not np.all(np.isfinite(translation)):
            raise DataError("Camera translation must be finite.")
        object.__setattr__(self, "rotation", _readonly(rotation))
        object.__setattr__(self, "translation", _readonly(translation))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.width, self.height

    def to_camera_frame(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) world points into the camera frame."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def to_dict(self) -> Dict[str, Any]:
        return {
            "focal": [float(self.fx), float(self.fy)],
            "principal": [float(self.cx), float(self.cy)],
            "R": [float(v) for v in self.rotation.reshape(-1)],
            "t": [float(v) for v in self.translation],
            "size": [self.width, self.height],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Camera":
        try:
            fx, fy = payload["focal"]
            cx, cy = payload["principal"]
            rotation = np.asarray(payload["R"], dtype=np.float64).reshape(3, 3)
            translation = np.asarray(payload["t"], dtype=np.float64).reshape(3)
            width, height = payload["size"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"Malformed camera record: {exc}") from exc
        return cls(float(fx), float(fy), float(cx), float(cy), rotation, translation, int(width), int(height))

    @classmethod
    def look_at(
        cls,
        eye: Sequence[float],
        target: Sequence[float],
        *,
        up: Sequence[float] = (0.0, -1.0, 0.0),
        focal: float,
        width: int,
        height: int,
    ) -> "Camera":
        """Build a camera at ``eye`` looking at ``target`` (image v axis along ``-up``)."""
        eye_v = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye_v
        forward /= np.linalg.norm(forward)
        down = -np.asarray(up, dtype=np.float64)
        right = np.cross(down, forward)
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise DataError("look_at: up vector is parallel to the viewing direction.")
        right /= norm
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward])
        translation = -rotation @ eye_v
        return cls(focal, focal, width / 2.0, height / 2.0, rotation, translation, width, height)


def project_point(cam: Camera, x: Sequence[float]) -> Projection:
    """Pinhole projection of a single world point."""
    xc, yc, zc = cam.to_camera_frame(np.asarray(x, dtype=np.float64))
    if zc <= 0.0:
        return Projection(pixel=(float("nan"), float("nan")), depth=float(zc))
    u = cam.fx * xc / zc + cam.cx
    v = cam.fy * yc / zc + cam.cy
    return Projection(pixel=(float(u), float(v)), depth=float(zc))


@dataclass(frozen=True, slots=True)
class Image:
    """
    Row-major float image in (H, W, C) layout.

    Values are finite; PNG export clamps to [0, 1].
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise DataError(f"Images must be HxW, HxWx1 or HxWx3, got shape {data.shape}.")
        if not np.all(np.isfinite(data)):
            raise DataError("Image contains non-finite values.")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]


def load_cameras(path: str | Path) -> List[Dict[str, Any]]:
    """
    Read a cameras JSON file.

    Accepts either a single camera record or a list of ``{"name", "split", "camera"}``
    entries as written by the synthetic generator. Always returns the list form.
    """
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(payload, dict) and "focal" in payload:
        return [{"name": Path(path).stem, "split": "test", "camera": Camera.from_dict(payload)}]
    if isinstance(payload, dict):
        payload = payload.get("views", [])
    entries = []
    for index, record in enumerate(payload):
        entries.append(
            {
                "name": record.get("name", f"{index:03d}"),
                "split": record.get("split", "train"),
                "camera": Camera.from_dict(record["camera"]),
            }
        )
    return entries


def save_camera(path: str | Path, cam: Camera) -> Path:
    destination = Path(path).expanduser().resolve()
    destination.parent.mkdir(parents=True, exist_ok=True)
    destination.write_text(json.dumps(cam.to_dict(), indent=2), encoding="utf-8")
    return destination
