"""Rendering a scene into its pixel-aligned component maps, and the reverse pass."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from ..branches import BranchCache
from ..geometry import Camera, Image
from ..scene.decoders import (
    DecodedGaussians,
    decode_intrinsic,
    decode_intrinsic_backward,
    decode_transient,
    decode_transient_backward,
    view_geometry,
)
from ..scene.model import SceneModel
from .splat import (
    ProjectedSplats,
    RasterResult,
    project_gaussians,
    project_gaussians_backward,
    rasterize,
    rasterize_backward,
)

MAP_NAMES = ("reflectance", "illumination", "residual", "enhanced_illumination", "depth", "alpha")

# intrinsic payload layout: reflectance 0:3, illumination 3, enhanced 4:7, depth 7
_R, _S, _E, _D = slice(0, 3), slice(3, 4), slice(4, 7), slice(7, 8)


@dataclass(slots=True)
class _BranchTrace:
    decoded: DecodedGaussians
    projected: ProjectedSplats
    raster: RasterResult
    opacities: np.ndarray
    payloads: np.ndarray


@dataclass(slots=True)
class RenderTrace:
    camera: Camera
    view_index: int | None
    intrinsic: _BranchTrace
    transient: _BranchTrace | None


@dataclass(slots=True)
class ComponentMaps:
    """
    Per-view rendered maps, all (H, W, C) float64 arrays.

    ``residual`` is all zeros when the transient branch was not rendered.
    """

    reflectance: np.ndarray
    illumination: np.ndarray
    residual: np.ndarray
    enhanced_illumination: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray
    trace: RenderTrace | None = field(default=None, repr=False)

    @property
    def height(self) -> int:
        return self.reflectance.shape[0]

    @property
    def width(self) -> int:
        return self.reflectance.shape[1]

    def get(self, name: str) -> np.ndarray:
        if name not in MAP_NAMES:
            raise KeyError(f"Unknown map '{name}'")
        return getattr(self, name)

    def as_image(self, name: str) -> Image:
        return Image(self.get(name))


def _render_branch(
    decoded: DecodedGaussians, payloads: np.ndarray, cam: Camera, branches: BranchCache | None, key: str
) -> _BranchTrace:
    projected = project_gaussians(cam, decoded.means, decoded.covariances, branches=branches, key=f"{key}.project")
    opacities = decoded.opacities[projected.index]
    visible_payloads = payloads[projected.index]
    raster = rasterize(projected, opacities, visible_payloads, cam.width, cam.height, branches=branches, key=f"{key}.raster")
    return _BranchTrace(decoded, projected, raster, opacities, visible_payloads)


def render_components(
    model: SceneModel,
    cam: Camera,
    view_index: int | None = None,
    *,
    branches: BranchCache | None = None,
) -> ComponentMaps:
    """
    Render every component map for ``cam``.

    Intrinsic Gaussians share one opacity stack for reflectance, illumination, enhanced
    illumination and depth. The transient branch is decoded and rendered only when
    ``view_index`` names a training view.
    """
    geom = view_geometry(model.positions, cam, branches=branches)
    intrinsic = decode_intrinsic(model, cam, geometry=geom, branches=branches)
    depth = cam.to_camera_frame(intrinsic.means)[:, 2:3]
    payloads = np.concatenate(
        [
            intrinsic.payloads["reflectance"],
            intrinsic.payloads["illumination"],
            intrinsic.payloads["enhanced"],
            depth,
        ],
        axis=1,
    )
    intrinsic_trace = _render_branch(intrinsic, payloads, cam, branches, "intrinsic")
    image = intrinsic_trace.raster.image

    transient_trace = None
    residual = np.zeros((cam.height, cam.width, 3))
    if view_index is not None:
        transient = decode_transient(model, cam, view_index, geometry=geom, branches=branches)
        transient_trace = _render_branch(transient, transient.payloads["residual"], cam, branches, "transient")
        residual = transient_trace.raster.image

    return ComponentMaps(
        reflectance=image[..., _R],
        illumination=image[..., _S],
        residual=residual,
        enhanced_illumination=image[..., _E],
        depth=image[..., _D],
        alpha=intrinsic_trace.raster.alpha[..., None],
        trace=RenderTrace(cam, view_index, intrinsic_trace, transient_trace),
    )


def _branch_backward(trace: _BranchTrace, cam: Camera, grad_image: np.ndarray, grad_alpha: np.ndarray | None):
    d_mean2d, d_conic, d_opacity, d_payload = rasterize_backward(
        trace.projected, trace.opacities, trace.payloads, trace.raster, grad_image, grad_alpha
    )
    decoded = trace.decoded
    index = trace.projected.index
    d_alpha = np.zeros(len(decoded))
    d_alpha[index] = d_opacity
    d_payloads = np.zeros((len(decoded), d_payload.shape[1]))
    d_payloads[index] = d_payload
    return d_mean2d, d_conic, d_alpha, d_payloads


def render_backward(model: SceneModel, maps: ComponentMaps, grads: Mapping[str, np.ndarray]) -> None:
    """
    Accumulate into ``model.store`` the gradient of a scalar whose adjoints w.r.t. the maps
    are ``grads`` (missing entries count as zero).
    """
    trace = maps.trace
    if trace is None:
        raise ValueError("These maps were rendered without a trace.")
    cam = trace.camera
    shape = (maps.height, maps.width)

    def grad(name: str, channels: int) -> np.ndarray:
        value = grads.get(name)
        return np.zeros(shape + (channels,)) if value is None else np.asarray(value, dtype=np.float64).reshape(shape + (channels,))

    intr = trace.intrinsic
    grad_image = np.concatenate(
        [grad("reflectance", 3), grad("illumination", 1), grad("enhanced_illumination", 3), grad("depth", 1)], axis=2
    )
    grad_alpha = grads.get("alpha")
    d_mean2d, d_conic, d_alpha, d_payloads = _branch_backward(intr, cam, grad_image, grad_alpha)
    d_depth = d_payloads[intr.projected.index, 7]
    d_means, d_covs = project_gaussians_backward(
        cam, intr.projected, intr.decoded.covariances, d_mean2d, d_conic, d_depth
    )
    decode_intrinsic_backward(
        model,
        intr.decoded,
        d_means,
        d_covs,
        d_alpha,
        {"reflectance": d_payloads[:, _R], "illumination": d_payloads[:, _S], "enhanced": d_payloads[:, _E]},
    )

    if trace.transient is not None and grads.get("residual") is not None:
        tr = trace.transient
        d_mean2d, d_conic, d_alpha, d_payloads = _branch_backward(tr, cam, grad("residual", 3), None)
        d_means, d_covs = project_gaussians_backward(
            cam, tr.projected, tr.decoded.covariances, d_mean2d, d_conic, np.zeros(len(tr.projected))
        )
        decode_transient_backward(model, tr.decoded, d_means, d_covs, d_alpha, {"residual": d_payloads})


def compose_low(maps: ComponentMaps) -> np.ndarray:
    """R * S + Rs, with the scalar illumination broadcast over colour channels; not clamped."""
    return maps.reflectance * maps.illumination + maps.residual


def compose_enhanced(maps: ComponentMaps) -> np.ndarray:
    """R * S_enh channel by channel; clamping happens only at export."""
    return maps.reflectance * maps.enhanced_illumination


def compose_low_backward(maps: ComponentMaps, grad: np.ndarray) -> Dict[str, np.ndarray]:
    return {
        "reflectance": grad * maps.illumination,
        "illumination": np.sum(grad * maps.reflectance, axis=2, keepdims=True),
        "residual": grad,
    }


def compose_enhanced_backward(maps: ComponentMaps, grad: np.ndarray) -> Dict[str, np.ndarray]:
    return {
        "reflectance": grad * maps.enhanced_illumination,
        "enhanced_illumination": grad * maps.reflectance,
    }


def add_grads(total: Dict[str, np.ndarray], extra: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    for name, value in extra.items():
        total[name] = total[name] + value if name in total else np.array(value, dtype=np.float64)
    return total
