"""
Synthetic low-light scenes with known reflectance, illumination and depth.

Surfaces are ray-cast exactly, so every generated view satisfies
``low = clip(R * (darkness * S) + noise + shift, 0, 1)`` by construction.
"""

from __future__ import annotations

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, List, Mapping, Tuple

import numpy as np

from .errors import ConfigError, DataError
from .geometry import Camera, Image, PointCloud
from .images import write_png, write_scalar_map
from .ply import save_ply
from .priors import GrayWorldPrior
from .training.dataset import Dataset, View

logger = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]


def _checker(u: np.ndarray, v: np.ndarray, checks: int) -> np.ndarray:
    return (np.floor(u * checks).astype(int) + np.floor(v * checks).astype(int)) % 2 == 1


class Surface(ABC):
    """A textured primitive that can be ray-cast and sampled by area."""

    def __init__(self, albedo: Vec3, albedo_alt: Vec3, checks: int) -> None:
        self.albedo = np.asarray(albedo, dtype=np.float64)
        self.albedo_alt = np.asarray(albedo_alt, dtype=np.float64)
        self.checks = checks

    def _colour(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.where(_checker(u, v, self.checks)[..., None], self.albedo_alt, self.albedo)

    @property
    @abstractmethod
    def area(self) -> float:
        """Surface area in world units squared."""

    @abstractmethod
    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Ray parameter of the first hit (``inf`` on a miss) and the albedo there."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, count: int) -> Tuple[np.ndarray, np.ndarray]:
        """``count`` uniformly distributed surface points with their albedo."""


class Rectangle(Surface):
    """Parallelogram ``center + s * half_u + t * half_v`` for s, t in [-1, 1]."""

    def __init__(self, center: Vec3, half_u: Vec3, half_v: Vec3, albedo: Vec3, albedo_alt: Vec3, checks: int = 4):
        super().__init__(albedo, albedo_alt, checks)
        self.center = np.asarray(center, dtype=np.float64)
        self.half_u = np.asarray(half_u, dtype=np.float64)
        self.half_v = np.asarray(half_v, dtype=np.float64)
        self.normal = np.cross(self.half_u, self.half_v)
        if np.linalg.norm(self.normal) < 1e-12:
            raise ConfigError("Rectangle axes must not be parallel.")

    @property
    def area(self) -> float:
        return 4.0 * float(np.linalg.norm(self.normal))

    def _local(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        rel = points - self.center
        s = rel @ self.half_u / (self.half_u @ self.half_u)
        t = rel @ self.half_v / (self.half_v @ self.half_v)
        return s, t

    def intersect(self, origin, dirs):
        denom = dirs @ self.normal
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = ((self.center - origin) @ self.normal) / denom
            t = np.where(np.isfinite(t), t, -1.0)
            hit = origin + t[..., None] * dirs
            s, v = self._local(hit)
        valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (np.abs(s) <= 1.0) & (np.abs(v) <= 1.0)
        return np.where(valid, t, np.inf), self._colour((s + 1.0) / 2.0, (v + 1.0) / 2.0)

    def sample(self, rng, count):
        st = rng.uniform(-1.0, 1.0, size=(count, 2))
        points = self.center + st[:, :1] * self.half_u + st[:, 1:] * self.half_v
        return points, self._colour((st[:, 0] + 1.0) / 2.0, (st[:, 1] + 1.0) / 2.0)


class Sphere(Surface):
    def __init__(self, center: Vec3, radius: float, albedo: Vec3, albedo_alt: Vec3, checks: int = 4):
        super().__init__(albedo, albedo_alt, checks)
        if radius <= 0:
            raise ConfigError("Sphere radius must be positive.")
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)

    @property
    def area(self) -> float:
        return 4.0 * np.pi * self.radius ** 2

    def _surface_colour(self, points: np.ndarray) -> np.ndarray:
        n = (points - self.center) / self.radius
        polar = np.arccos(np.clip(n[..., 1], -1.0, 1.0)) / np.pi
        azimuth = (np.arctan2(n[..., 2], n[..., 0]) + np.pi) / (2.0 * np.pi)
        return self._colour(polar, 2.0 * azimuth)

    def intersect(self, origin, dirs):
        rel = origin - self.center
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * dirs @ rel
        c = rel @ rel - self.radius ** 2
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = (-b - root) / (2.0 * a)
        far = (-b + root) / (2.0 * a)
        t = np.where(near > 1e-9, near, far)
        valid = (disc >= 0.0) & (t > 1e-9)
        t = np.where(valid, t, np.inf)
        hit = origin + np.where(valid, t, 0.0)[..., None] * dirs
        return t, self._surface_colour(hit)

    def sample(self, rng, count):
        normals = rng.normal(size=(count, 3))
        normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
        points = self.center + self.radius * normals
        return points, self._surface_colour(points)


@dataclass(frozen=True, slots=True)
class Light:
    """Isotropic Gaussian blob of illumination."""

    center: Vec3
    sigma: float
    strength: float


@dataclass(frozen=True, slots=True)
class SynthSpec:
    """
    Scene layout, illumination field, camera ring and degradation.

    Illumination is ``min(1, ambient + sum of light blobs)``, so it is strictly positive
    whenever ``ambient > 0``. Cameras sit on a ring of ``ring_radius`` at height
    ``ring_height`` and look at the origin; the last ``test_views`` of them are held out.
    """

    width: int = 64
    height: int = 64
    focal: float = 64.0
    views: int = 6
    test_views: int = 1
    ring_radius: float = 4.0
    ring_height: float = -1.5
    surfaces: Tuple[Surface, ...] = field(default_factory=lambda: default_surfaces())
    ambient: float = 0.2
    lights: Tuple[Light, ...] = (
        Light((1.0, -1.0, 1.0), 1.2, 0.8),
        Light((-1.5, 0.0, -1.0), 1.0, 0.5),
    )
    noise_sigma: float = 0.0
    color_shift: float = 0.0
    darkness: float = 0.25
    cloud_points: int = 4000
    cloud_jitter: float = 0.0
    gamma: float = 4.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0 or self.focal <= 0:
            raise ConfigError("Image size and focal length must be positive.")
        if self.views < 1 or not 0 <= self.test_views < self.views:
            raise ConfigError("Need at least one training view.")
        if self.ambient <= 0:
            raise ConfigError("ambient illumination must be positive.")
        if self.noise_sigma < 0 or self.color_shift < 0 or self.cloud_jitter < 0:
            raise ConfigError("Noise, colour shift and jitter must be non-negative.")
        if not 0.0 < self.darkness <= 1.0:
            raise ConfigError("darkness must lie in (0, 1].")
        if not self.surfaces:
            raise ConfigError("A scene needs at least one surface.")
        if self.cloud_points < 1:
            raise ConfigError("cloud_points must be positive.")

    def illumination(self, points: np.ndarray) -> np.ndarray:
        value = np.full(points.shape[:-1], self.ambient)
        for light in self.lights:
            d2 = np.sum((points - np.asarray(light.center)) ** 2, axis=-1)
            value = value + light.strength * np.exp(-d2 / (2.0 * light.sigma ** 2))
        return np.minimum(value, 1.0)

    def cameras(self) -> List[Camera]:
        cams = []
        for index in range(self.views):
            angle = 2.0 * np.pi * index / self.views
            eye = (self.ring_radius * np.sin(angle), self.ring_height, -self.ring_radius * np.cos(angle))
            cams.append(
                Camera.look_at(eye, (0.0, 0.0, 0.0), focal=self.focal, width=self.width, height=self.height)
            )
        return cams


def default_surfaces() -> Tuple[Surface, ...]:
    return (
        Rectangle((0.0, 1.0, 0.0), (2.5, 0.0, 0.0), (0.0, 0.0, 2.5), (0.8, 0.7, 0.5), (0.3, 0.35, 0.4), checks=5),
        Sphere((0.0, 0.2, 0.0), 0.8, (0.9, 0.3, 0.2), (0.9, 0.8, 0.3), checks=3),
        Sphere((1.3, 0.5, 0.8), 0.5, (0.2, 0.5, 0.9), (0.6, 0.8, 0.9), checks=2),
    )


@dataclass(slots=True)
class SynthView:
    name: str
    split: str
    camera: Camera
    low: Image
    prior: Image | None
    reflectance: np.ndarray
    illumination: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    noise: np.ndarray
    shift: np.ndarray

    @property
    def clean(self) -> np.ndarray:
        return self.reflectance * self.illumination

    def gt_depth(self) -> Image:
        return Image(self.depth)


@dataclass(slots=True)
class SynthBundle:
    spec: SynthSpec
    seed: int
    cloud: PointCloud
    views: List[SynthView]

    def dataset(self, *, depth_priors: bool = True) -> Dataset:
        return Dataset.build(
            [
                View(
                    v.name,
                    v.camera,
                    v.low,
                    v.prior,
                    v.gt_depth() if depth_priors else None,
                    v.split,
                )
                for v in self.views
            ]
        )

    def view(self, name: str) -> SynthView:
        for item in self.views:
            if item.name == name:
                return item
        raise DataError(f"No synthetic view named '{name}'.")


def ray_directions(cam: Camera) -> np.ndarray:
    """(H, W, 3) world-space directions with unit camera-frame depth; pixel (i, j) samples (j, i)."""
    rows, cols = np.mgrid[0 : cam.height, 0 : cam.width].astype(np.float64)
    local = np.stack([(cols - cam.cx) / cam.fx, (rows - cam.cy) / cam.fy, np.ones_like(rows)], axis=-1)
    return local @ cam.rotation


def cast(spec: SynthSpec, cam: Camera) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Reflectance (H,W,3), illumination (H,W,1), depth (H,W,1) and hit mask (H,W) for one camera."""
    origin = cam.center
    dirs = ray_directions(cam)
    depth = np.full(dirs.shape[:2], np.inf)
    albedo = np.zeros(dirs.shape)
    for surface in spec.surfaces:
        t, colour = surface.intersect(origin, dirs)
        closer = t < depth
        depth = np.where(closer, t, depth)
        albedo = np.where(closer[..., None], colour, albedo)
    mask = np.isfinite(depth)
    if not mask.any():
        raise DataError("A synthetic camera sees no geometry.")
    points = origin + np.where(mask, depth, 0.0)[..., None] * dirs
    illumination = np.where(mask, spec.illumination(points), spec.ambient)
    depth = np.where(mask, depth, 0.0)
    return albedo, illumination[..., None], depth[..., None], mask


def sample_cloud(spec: SynthSpec, rng: np.random.Generator) -> PointCloud:
    areas = np.array([s.area for s in spec.surfaces])
    counts = rng.multinomial(spec.cloud_points, areas / areas.sum())
    points, colours = [], []
    for surface, count in zip(spec.surfaces, counts):
        if count == 0:
            continue
        p, albedo = surface.sample(rng, int(count))
        points.append(p)
        colours.append(np.clip(albedo * spec.darkness * spec.illumination(p)[:, None], 0.0, 1.0))
    cloud = np.concatenate(points)
    if spec.cloud_jitter > 0:
        cloud = cloud + rng.normal(0.0, spec.cloud_jitter, size=cloud.shape)
    return PointCloud(cloud, np.concatenate(colours))


def generate(spec: SynthSpec, seed: int) -> SynthBundle:
    """Deterministic under ``seed``: one child generator for the cloud and one per view."""
    children = np.random.SeedSequence(seed).spawn(spec.views + 1)
    cloud = sample_cloud(spec, np.random.default_rng(children[0]))
    prior = GrayWorldPrior(spec.gamma)
    views = []
    for index, cam in enumerate(spec.cameras()):
        rng = np.random.default_rng(children[index + 1])
        reflectance, illumination, depth, mask = cast(spec, cam)
        noise = rng.normal(0.0, spec.noise_sigma, size=reflectance.shape) if spec.noise_sigma > 0 else np.zeros_like(reflectance)
        shift = rng.uniform(-spec.color_shift, spec.color_shift, size=3) if spec.color_shift > 0 else np.zeros(3)
        low = Image(np.clip(reflectance * (spec.darkness * illumination) + noise + shift, 0.0, 1.0))
        split = "test" if index >= spec.views - spec.test_views else "train"
        views.append(
            SynthView(
                name=f"{index:03d}",
                split=split,
                camera=cam,
                low=low,
                prior=prior.provide(low) if split == "train" else None,
                reflectance=reflectance,
                illumination=illumination,
                depth=depth,
                mask=mask,
                noise=noise,
                shift=shift,
            )
        )
    logger.info("Generated %d views and %d cloud points (seed %d)", len(views), len(cloud), seed)
    return SynthBundle(spec=spec, seed=seed, cloud=cloud, views=views)


def write_bundle(bundle: SynthBundle, directory: str | Path) -> Path:
    """
    Lay ``bundle`` out as a scene directory::

        cloud.ply  cameras.json  views/  priors/  gt/{R,S,depth}/  gt/degradation.json
    """
    root = Path(directory).expanduser().resolve()
    root.mkdir(parents=True, exist_ok=True)
    save_ply(root / "cloud.ply", bundle.cloud)
    records = [{"name": v.name, "split": v.split, "camera": v.camera.to_dict()} for v in bundle.views]
    (root / "cameras.json").write_text(json.dumps({"views": records}, indent=2), encoding="utf-8")
    degradation = {}
    for view in bundle.views:
        write_png(root / "views" / f"{view.name}.png", view.low)
        if view.prior is not None:
            write_png(root / "priors" / f"{view.name}.png", view.prior)
        write_png(root / "gt" / "R" / f"{view.name}.png", Image(view.reflectance))
        write_scalar_map(root / "gt" / "S" / f"{view.name}.png", Image(view.illumination))
        write_scalar_map(root / "gt" / "depth" / f"{view.name}.png", view.gt_depth())
        degradation[view.name] = {
            "noise_std": float(view.noise.std()),
            "shift": [float(s) for s in view.shift],
            "darkness": bundle.spec.darkness,
        }
    (root / "gt" / "degradation.json").write_text(json.dumps(degradation, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("Wrote synthetic scene to %s", root)
    return root


_SURFACE_KEYS = {"rectangle": Rectangle, "sphere": Sphere}


def _surface(kind: str, table: Mapping[str, Any]) -> Surface:
    try:
        return _SURFACE_KEYS[kind](**table)
    except TypeError as exc:
        raise ConfigError(f"Invalid [[{kind}]] entry: {exc}") from exc


def synth_spec_from_dict(payload: Mapping[str, Any]) -> SynthSpec:
    """
    Build a spec from a TOML-shaped mapping: a ``[scene]`` table with the scalar fields plus
    optional ``[[rectangle]]``, ``[[sphere]]`` and ``[[light]]`` arrays (replacing the defaults).
    """
    unknown = sorted(set(payload) - {"scene", "rectangle", "sphere", "light"})
    if unknown:
        raise ConfigError(f"Unknown table(s) in scene spec: {', '.join(unknown)}")
    scene = dict(payload.get("scene", {}))
    scalar = {f.name for f in fields(SynthSpec)} - {"surfaces", "lights"}
    bad = sorted(set(scene) - scalar)
    if bad:
        raise ConfigError(f"Unknown key(s) in [scene]: {', '.join(bad)}")
    surfaces: List[Surface] = []
    for kind in ("rectangle", "sphere"):
        surfaces.extend(_surface(kind, table) for table in payload.get(kind, []))
    if surfaces:
        scene["surfaces"] = tuple(surfaces)
    if "light" in payload:
        try:
            scene["lights"] = tuple(Light(**table) for table in payload["light"])
        except TypeError as exc:
            raise ConfigError(f"Invalid [[light]] entry: {exc}") from exc
    return SynthSpec(**scene)


def load_synth_spec(path: str | Path) -> SynthSpec:
    source = Path(path)
    try:
        payload = tomllib.loads(source.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return synth_spec_from_dict(payload)
