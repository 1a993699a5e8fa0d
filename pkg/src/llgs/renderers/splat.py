"""
Projection of 3D Gaussians and tile-based front-to-back alpha compositing.

Pixel (row i, column j) samples the image-plane point (j, i). Splats are sorted once per
view by camera depth (ties broken by Gaussian index) and bucketed into 16x16 tiles by
their 3-sigma bounding boxes; every pixel of a tile composites the tile's splats in
global order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from ..branches import BranchCache, decide
from ..geometry import Camera

NEAR_PLANE = 0.01
DILATION = 0.3
MAX_SIGMA = 0.99
MIN_TRANSMITTANCE = 1e-4
EXTENT = 3.0
TILE_SIZE = 16


@dataclass(frozen=True, slots=True)
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    gaussian_index: int


@dataclass(slots=True)
class ProjectedSplats:
    """Projected, non-culled Gaussians; ``index`` maps each splat back to its Gaussian."""

    index: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    depth: np.ndarray
    cam_points: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.index)

    def splat(self, i: int) -> Splat2D:
        return Splat2D(self.mean2d[i].copy(), self.cov2d[i].copy(), float(self.depth[i]), int(self.index[i]))


def _pinhole_jacobian(cam: Camera, p: np.ndarray) -> np.ndarray:
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    jac = np.zeros((len(p), 2, 3))
    jac[:, 0, 0] = cam.fx / z
    jac[:, 0, 2] = -cam.fx * x / z ** 2
    jac[:, 1, 1] = cam.fy / z
    jac[:, 1, 2] = -cam.fy * y / z ** 2
    return jac


def project_gaussians(
    cam: Camera,
    means: np.ndarray,
    covariances: np.ndarray,
    *,
    branches: BranchCache | None = None,
    key: str = "splat",
) -> ProjectedSplats:
    """
    Project (G, 3) means and (G, 3, 3) covariances.

    Gaussians at depth <= 0.01 or whose 3-sigma box misses the frame are culled.
    """
    means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
    covariances = np.asarray(covariances, dtype=np.float64).reshape(-1, 3, 3)
    p_all = cam.to_camera_frame(means)

    def project(index: np.ndarray):
        p = p_all[index]
        jac = _pinhole_jacobian(cam, p)
        t = jac @ cam.rotation
        cov2d = t @ covariances[index] @ np.swapaxes(t, 1, 2) + DILATION * np.eye(2)
        mean2d = np.stack([cam.fx * p[:, 0] / p[:, 2] + cam.cx, cam.fy * p[:, 1] / p[:, 2] + cam.cy], axis=1)
        return p, jac, cov2d, mean2d

    def visible() -> np.ndarray:
        keep = p_all[:, 2] > NEAR_PLANE
        front = np.nonzero(keep)[0]
        _, _, cov2d, mean2d = project(front)
        ext_x = EXTENT * np.sqrt(cov2d[:, 0, 0])
        ext_y = EXTENT * np.sqrt(cov2d[:, 1, 1])
        keep[front] = (
            (mean2d[:, 0] + ext_x >= 0.0)
            & (mean2d[:, 0] - ext_x <= cam.width - 1)
            & (mean2d[:, 1] + ext_y >= 0.0)
            & (mean2d[:, 1] - ext_y <= cam.height - 1)
        )
        return keep

    index = np.nonzero(decide(branches, f"{key}.visible", visible))[0]
    p, jac, cov2d, mean2d = project(index)
    return ProjectedSplats(
        index=index,
        mean2d=mean2d,
        cov2d=cov2d,
        conic=np.linalg.inv(cov2d) if len(index) else np.zeros((0, 2, 2)),
        depth=p[:, 2].copy(),
        cam_points=p,
        jacobian=jac,
    )


def project_gaussian(cam: Camera, mu: Sequence[float], cov3d: np.ndarray, *, index: int = 0) -> Splat2D | None:
    """Single-Gaussian projection; ``None`` when culled."""
    projected = project_gaussians(cam, np.asarray(mu, dtype=np.float64)[None], np.asarray(cov3d)[None])
    if not len(projected):
        return None
    splat = projected.splat(0)
    return Splat2D(splat.mean2d, splat.cov2d, splat.depth, index)


def project_gaussians_backward(
    cam: Camera,
    projected: ProjectedSplats,
    covariances: np.ndarray,
    d_mean2d: np.ndarray,
    d_conic: np.ndarray,
    d_depth: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. all (G, 3) means and (G, 3, 3) covariances; culled Gaussians get zero."""
    count = len(covariances)
    d_means = np.zeros((count, 3))
    d_covs = np.zeros((count, 3, 3))
    if not len(projected):
        return d_means, d_covs
    rot = cam.rotation
    conic = projected.conic
    jac = projected.jacobian
    p = projected.cam_points
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    cov3d = covariances[projected.index]
    t = jac @ rot

    d_cov2d = -conic @ d_conic @ conic
    d_cov2d_sym = 0.5 * (d_cov2d + np.swapaxes(d_cov2d, 1, 2))
    d_cov3d = np.swapaxes(t, 1, 2) @ d_cov2d @ t
    d_t = 2.0 * d_cov2d_sym @ t @ cov3d
    d_jac = d_t @ rot.T

    d_p = np.zeros_like(p)
    d_p[:, 0] = d_mean2d[:, 0] * cam.fx / z - d_jac[:, 0, 2] * cam.fx / z ** 2
    d_p[:, 1] = d_mean2d[:, 1] * cam.fy / z - d_jac[:, 1, 2] * cam.fy / z ** 2
    d_p[:, 2] = (
        -d_mean2d[:, 0] * cam.fx * x / z ** 2
        - d_mean2d[:, 1] * cam.fy * y / z ** 2
        - d_jac[:, 0, 0] * cam.fx / z ** 2
        + d_jac[:, 0, 2] * 2.0 * cam.fx * x / z ** 3
        - d_jac[:, 1, 1] * cam.fy / z ** 2
        + d_jac[:, 1, 2] * 2.0 * cam.fy * y / z ** 3
        + d_depth
    )
    np.add.at(d_means, projected.index, d_p @ rot)
    np.add.at(d_covs, projected.index, d_cov3d)
    return d_means, d_covs


# ---------------------------------------------------------------------------
# compositing


@dataclass(frozen=True, slots=True)
class CompositeResult:
    value: np.ndarray
    alpha: float
    transmittance: Tuple[float, ...]


def gaussian_weight(splat: Splat2D, pixel: Sequence[float]) -> float:
    d = np.asarray(pixel, dtype=np.float64) - splat.mean2d
    return float(np.exp(-0.5 * d @ np.linalg.solve(splat.cov2d, d)))


def composite(
    splats: Sequence[Splat2D],
    opacities: Sequence[float],
    payloads: Sequence[Sequence[float] | float],
    pixel: Sequence[float],
) -> CompositeResult:
    """
    Front-to-back compositing of ``splats`` (already depth ordered) at one pixel.

    ``transmittance`` lists T_i in front of every splat that contributed.
    """
    if not splats:
        return CompositeResult(np.zeros(1), 0.0, ())
    value = np.zeros(np.atleast_1d(np.asarray(payloads[0], dtype=np.float64)).shape)
    t = 1.0
    seen: List[float] = []
    for splat, opacity, payload in zip(splats, opacities, payloads):
        if t < MIN_TRANSMITTANCE:
            break
        sigma = min(float(opacity) * gaussian_weight(splat, pixel), MAX_SIGMA)
        seen.append(t)
        value = value + t * sigma * np.atleast_1d(np.asarray(payload, dtype=np.float64))
        t *= 1.0 - sigma
    return CompositeResult(value, 1.0 - t, tuple(seen))


@dataclass(slots=True)
class _TileState:
    pixels: np.ndarray
    flat: np.ndarray
    members: np.ndarray
    gauss: np.ndarray
    clamp: np.ndarray
    sigma: np.ndarray
    before: np.ndarray
    final: np.ndarray


@dataclass(slots=True)
class RasterResult:
    """(H, W, C) composited payloads, (H, W) accumulated alpha, and the per-tile state for backward."""

    image: np.ndarray
    alpha: np.ndarray
    order: np.ndarray
    tiles: List[_TileState] = field(default_factory=list, repr=False)


def _as_rows(payloads: np.ndarray, count: int) -> np.ndarray:
    """(M,) or (M, C) payloads as (M, C); an empty scene keeps its channel count."""
    payloads = np.asarray(payloads, dtype=np.float64)
    if payloads.ndim == 1:
        payloads = payloads[:, None]
    if len(payloads) != count:
        raise ValueError(f"Expected {count} payload rows, got {len(payloads)}.")
    return payloads


def depth_order(projected: ProjectedSplats) -> np.ndarray:
    """Front to back, equal depths by ascending Gaussian index."""
    return np.lexsort((projected.index, projected.depth))


def _tile_members(projected: ProjectedSplats, order: np.ndarray, width: int, height: int, tile_size: int):
    ext_x = EXTENT * np.sqrt(projected.cov2d[order, 0, 0])
    ext_y = EXTENT * np.sqrt(projected.cov2d[order, 1, 1])
    tiles_x = (width + tile_size - 1) // tile_size
    tiles_y = (height + tile_size - 1) // tile_size
    mean = projected.mean2d[order]
    x0 = np.clip(np.floor((mean[:, 0] - ext_x) / tile_size), 0, tiles_x - 1)
    x1 = np.clip(np.floor((mean[:, 0] + ext_x) / tile_size), 0, tiles_x - 1)
    y0 = np.clip(np.floor((mean[:, 1] - ext_y) / tile_size), 0, tiles_y - 1)
    y1 = np.clip(np.floor((mean[:, 1] + ext_y) / tile_size), 0, tiles_y - 1)
    members = []
    for ty in range(tiles_y):
        for tx in range(tiles_x):
            hit = (x0 <= tx) & (tx <= x1) & (y0 <= ty) & (ty <= y1)
            members.append(order[hit])
    return members, tiles_x, tiles_y


def rasterize(
    projected: ProjectedSplats,
    opacities: np.ndarray,
    payloads: np.ndarray,
    width: int,
    height: int,
    *,
    branches: BranchCache | None = None,
    key: str = "raster",
    tile_size: int = TILE_SIZE,
) -> RasterResult:
    """
    Composite (M,) splat opacities and (M, C) payloads into an (H, W, C) image.

    sigma = min(alpha * G, 0.99); a splat contributes to a pixel only while the
    transmittance in front of it is at least 1e-4.
    """
    payloads = _as_rows(payloads, len(projected))
    channels = payloads.shape[1]
    image = np.zeros((height * width, channels))
    alpha = np.zeros(height * width)
    order = decide(branches, f"{key}.order", lambda: depth_order(projected))
    members, tiles_x, tiles_y = decide(
        branches, f"{key}.tiles", lambda: _tile_members(projected, order, width, height, tile_size)
    )
    result = RasterResult(image=image, alpha=alpha, order=order)
    for tile_id, member in enumerate(members):
        ty, tx = divmod(tile_id, tiles_x)
        cols = np.arange(tx * tile_size, min((tx + 1) * tile_size, width))
        rows = np.arange(ty * tile_size, min((ty + 1) * tile_size, height))
        grid_y, grid_x = np.meshgrid(rows, cols, indexing="ij")
        pixels = np.stack([grid_x.ravel(), grid_y.ravel()], axis=1).astype(np.float64)
        flat = (grid_y * width + grid_x).ravel()
        if not len(member):
            continue
        d = pixels[None, :, :] - projected.mean2d[member][:, None, :]
        conic = projected.conic[member]
        power = -0.5 * (
            conic[:, 0, 0, None] * d[..., 0] ** 2
            + 2.0 * conic[:, 0, 1, None] * d[..., 0] * d[..., 1]
            + conic[:, 1, 1, None] * d[..., 1] ** 2
        )
        gauss = np.exp(power)
        raw = opacities[member][:, None] * gauss
        clamp = decide(branches, f"{key}.tile{tile_id}.clamp", lambda: raw > MAX_SIGMA)
        sigma = np.where(clamp, MAX_SIGMA, raw)
        before = np.cumprod(np.vstack([np.ones((1, len(flat))), 1.0 - sigma[:-1]]), axis=0)
        active = decide(branches, f"{key}.tile{tile_id}.active", lambda: before >= MIN_TRANSMITTANCE)
        sigma = np.where(active, sigma, 0.0)
        before = np.cumprod(np.vstack([np.ones((1, len(flat))), 1.0 - sigma[:-1]]), axis=0)
        final = before[-1] * (1.0 - sigma[-1])
        weights = before * sigma
        image[flat] = weights.T @ payloads[member]
        alpha[flat] = 1.0 - final
        result.tiles.append(_TileState(pixels, flat, member, gauss, clamp, sigma, before, final))
    result.image = image.reshape(height, width, channels)
    result.alpha = alpha.reshape(height, width)
    return result


def rasterize_backward(
    projected: ProjectedSplats,
    opacities: np.ndarray,
    payloads: np.ndarray,
    raster: RasterResult,
    grad_image: np.ndarray,
    grad_alpha: np.ndarray | None = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Reverse pass of :func:`rasterize`.

    Returns gradients w.r.t. (M, 2) means, (M, 2, 2) conics, (M,) opacities and (M, C) payloads.
    """
    count = len(projected)
    payloads = _as_rows(payloads, count)
    channels = payloads.shape[1]
    g_image = np.asarray(grad_image, dtype=np.float64).reshape(-1, channels)
    g_alpha = None if grad_alpha is None else np.asarray(grad_alpha, dtype=np.float64).reshape(-1)
    d_mean2d = np.zeros((count, 2))
    d_conic = np.zeros((count, 2, 2))
    d_opacity = np.zeros(count)
    d_payload = np.zeros_like(payloads)

    for tile in raster.tiles:
        member = tile.members
        g = g_image[tile.flat]
        c = payloads[member]
        weights = tile.before * tile.sigma
        d_payload[member] += weights @ g

        h = c @ g.T
        q = weights * h
        behind = np.cumsum(q[::-1], axis=0)[::-1] - q
        one_minus = 1.0 - tile.sigma
        d_sigma = tile.before * h - behind / one_minus
        if g_alpha is not None:
            d_sigma += g_alpha[tile.flat][None, :] * tile.final[None, :] / one_minus
        d_sigma = np.where(tile.sigma > 0.0, d_sigma, 0.0)
        d_raw = np.where(tile.clamp, 0.0, d_sigma)

        d_opacity[member] += np.sum(d_raw * tile.gauss, axis=1)
        e = d_raw * opacities[member][:, None] * tile.gauss
        d = tile.pixels[None, :, :] - projected.mean2d[member][:, None, :]
        conic = projected.conic[member]
        e_dx = np.sum(e * d[..., 0], axis=1)
        e_dy = np.sum(e * d[..., 1], axis=1)
        d_mean2d[member, 0] += conic[:, 0, 0] * e_dx + conic[:, 0, 1] * e_dy
        d_mean2d[member, 1] += conic[:, 1, 0] * e_dx + conic[:, 1, 1] * e_dy
        d_conic[member, 0, 0] += -0.5 * np.sum(e * d[..., 0] ** 2, axis=1)
        d_conic[member, 1, 1] += -0.5 * np.sum(e * d[..., 1] ** 2, axis=1)
        cross = -0.5 * np.sum(e * d[..., 0] * d[..., 1], axis=1)
        d_conic[member, 0, 1] += cross
        d_conic[member, 1, 0] += cross
    return d_mean2d, d_conic, d_opacity, d_payload
