"""
Per-view decoding of anchors into neural Gaussians, with the matching backward passes.

Every decoder is vectorised over anchors. Gaussian ``g`` of a decoded branch belongs to
anchor ``g // k`` and is its ``g % k``-th child. MLP inputs are ordered
``[feature, view direction, view distance]`` (the reflectance decoder drops the direction,
the residual decoder appends the view embedding).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Sequence, Tuple

import numpy as np

from ..branches import BranchCache, decide
from ..geometry import Camera
from .mlp import mlp_backward, mlp_forward, sigmoid, softplus
from .model import (
    EMBEDDING,
    FEATURE_INTRINSIC,
    FEATURE_TRANSIENT,
    ILLUMINATION,
    OFFSETS_INTRINSIC,
    OFFSETS_TRANSIENT,
    OPACITY,
    OPACITY_TRANSIENT,
    POSITION,
    REFLECTANCE,
    RESIDUAL,
    SCALE_ROT,
    SCALE_ROT_TRANSIENT,
    TONE_MAP,
    SceneModel,
)

logger = logging.getLogger(__name__)

Branch = Literal["intrinsic", "transient"]

_BRANCH_NAMES = {
    "intrinsic": (OFFSETS_INTRINSIC, FEATURE_INTRINSIC, OPACITY, SCALE_ROT),
    "transient": (OFFSETS_TRANSIENT, FEATURE_TRANSIENT, OPACITY_TRANSIENT, SCALE_ROT_TRANSIENT),
}


# ---------------------------------------------------------------------------
# view geometry


@dataclass(slots=True)
class ViewGeometry:
    """Distance ``delta`` (N,) and unit direction (N, 3) from the camera centre to each anchor."""

    delta: np.ndarray
    direction: np.ndarray
    degenerate: np.ndarray

    def inputs(self) -> np.ndarray:
        return np.concatenate([self.direction, self.delta[:, None]], axis=1)


def view_geometry(
    positions: np.ndarray, cam: Camera, *, branches: BranchCache | None = None
) -> ViewGeometry:
    """A camera sitting exactly on an anchor gets direction +Z for that anchor."""
    offset = np.asarray(positions, dtype=np.float64) - cam.center
    delta = np.linalg.norm(offset, axis=1)
    degenerate = decide(branches, "geometry.degenerate", lambda: delta == 0.0)
    if degenerate.any() and (branches is None or not branches.replaying):
        logger.warning("Camera centre coincides with %d anchor(s); using +Z as view direction", int(degenerate.sum()))
    safe = np.where(degenerate, 1.0, delta)
    direction = offset / safe[:, None]
    direction[degenerate] = (0.0, 0.0, 1.0)
    return ViewGeometry(delta=delta, direction=direction, degenerate=degenerate)


def view_geometry_backward(geom: ViewGeometry, d_delta: np.ndarray, d_direction: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. anchor positions; degenerate anchors receive none."""
    safe = np.where(geom.degenerate, 1.0, geom.delta)
    radial = np.sum(d_direction * geom.direction, axis=1, keepdims=True)
    d_pos = d_delta[:, None] * geom.direction + (d_direction - radial * geom.direction) / safe[:, None]
    d_pos[geom.degenerate] = 0.0
    return d_pos


# ---------------------------------------------------------------------------
# closed-form pieces


def decode_positions(position: np.ndarray, offsets: np.ndarray, scale: np.ndarray | float) -> np.ndarray:
    """mu_i = x_v + O_i * l_v for (..., 3) anchors and (..., k, 3) offsets."""
    position = np.asarray(position, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    return position[..., None, :] + np.asarray(offsets, dtype=np.float64) * scale[..., None, None]


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """(..., 4) unit quaternions (w, x, y, z) to (..., 3, 3) rotation matrices."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def _rotation_jacobian(q: np.ndarray) -> np.ndarray:
    """d R / d q as (..., 4, 3, 3)."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    zero = np.zeros_like(w)

    def mat(*rows):
        return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)

    d_w = mat((zero, -2 * z, 2 * y), (2 * z, zero, -2 * x), (-2 * y, 2 * x, zero))
    d_x = mat((zero, 2 * y, 2 * z), (2 * y, -4 * x, -2 * w), (2 * z, 2 * w, -4 * x))
    d_y = mat((-4 * y, 2 * x, 2 * w), (2 * x, zero, 2 * z), (-2 * w, 2 * z, -4 * y))
    d_z = mat((-4 * z, -2 * w, 2 * x), (2 * w, -4 * z, 2 * y), (2 * x, 2 * y, zero))
    return np.stack([d_w, d_x, d_y, d_z], axis=-3)


def build_covariance(scales: np.ndarray, quaternions: np.ndarray) -> np.ndarray:
    """Sigma = R diag(s)^2 R^T; quaternions are normalised first."""
    q = np.asarray(quaternions, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    m = quaternion_to_rotation(q) * np.asarray(scales, dtype=np.float64)[..., None, :]
    return m @ np.swapaxes(m, -1, -2)


def build_covariance_backward(
    scales: np.ndarray, quaternions: np.ndarray, d_cov: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients w.r.t. the scales and the raw (unnormalised) quaternions."""
    norm = np.linalg.norm(quaternions, axis=-1, keepdims=True)
    q = quaternions / norm
    rot = quaternion_to_rotation(q)
    m = rot * scales[..., None, :]
    d_m = (d_cov + np.swapaxes(d_cov, -1, -2)) @ m
    d_scales = np.sum(d_m * rot, axis=-2)
    d_rot = d_m * scales[..., None, :]
    d_q = np.einsum("...kij,...ij->...k", _rotation_jacobian(q), d_rot)
    d_raw = (d_q - np.sum(d_q * q, axis=-1, keepdims=True) * q) / norm
    return d_scales, d_raw


# ---------------------------------------------------------------------------
# single-decoder entry points


def _view_inputs(model: SceneModel, feature: str, geom: ViewGeometry) -> np.ndarray:
    return np.concatenate([model.store[feature], geom.inputs()], axis=1)


def decode_opacity(
    model: SceneModel, cam: Camera, *, branch: Branch = "intrinsic", branches: BranchCache | None = None
) -> np.ndarray:
    """(N, k) opacities in [0, 1] from ``[feature, direction, distance]``."""
    _, feature, opacity, _ = _BRANCH_NAMES[branch]
    geom = view_geometry(model.positions, cam, branches=branches)
    pre, _ = mlp_forward(model.mlp(opacity), _view_inputs(model, feature, geom), branches=branches, key=f"{branch}.opacity")
    return sigmoid(pre)


def decode_reflectance(model: SceneModel, cam: Camera, *, branches: BranchCache | None = None) -> np.ndarray:
    """(N, k, 3) reflectance in [0, 1]; depends on the view distance only."""
    geom = view_geometry(model.positions, cam, branches=branches)
    inputs = np.concatenate([model.store[FEATURE_INTRINSIC], geom.delta[:, None]], axis=1)
    pre, _ = mlp_forward(model.mlp(REFLECTANCE), inputs, branches=branches, key="intrinsic.reflectance")
    return sigmoid(pre).reshape(model.num_anchors, model.k, 3)


def decode_illumination(model: SceneModel, cam: Camera, *, branches: BranchCache | None = None) -> np.ndarray:
    """(N, k) strictly positive illumination."""
    geom = view_geometry(model.positions, cam, branches=branches)
    pre, _ = mlp_forward(
        model.mlp(ILLUMINATION), _view_inputs(model, FEATURE_INTRINSIC, geom), branches=branches, key="intrinsic.illumination"
    )
    return softplus(pre)


def decode_residual(
    model: SceneModel, cam: Camera, view_index: int | None, *, branches: BranchCache | None = None
) -> np.ndarray:
    """(N, k, 3) residual in [-1, 1] from the transient feature and the view embedding."""
    embedding = model.embedding(view_index)
    geom = view_geometry(model.positions, cam, branches=branches)
    inputs = _residual_inputs(model, geom, embedding)
    pre, _ = mlp_forward(model.mlp(RESIDUAL), inputs, branches=branches, key="transient.residual")
    return np.tanh(pre).reshape(model.num_anchors, model.k, 3)


def decode_enhanced_illumination(
    model: SceneModel, illumination: np.ndarray, *, branches: BranchCache | None = None
) -> np.ndarray:
    """(N, k, 3) enhanced illumination from each Gaussian's illumination and its anchor feature."""
    illumination = np.asarray(illumination, dtype=np.float64).reshape(model.num_anchors, model.k)
    pre, _ = mlp_forward(model.mlp(TONE_MAP), _tone_inputs(model, illumination), branches=branches, key="intrinsic.tone_map")
    return softplus(pre).reshape(model.num_anchors, model.k, 3)


def _residual_inputs(model: SceneModel, geom: ViewGeometry, embedding: np.ndarray) -> np.ndarray:
    tiled = np.broadcast_to(embedding, (model.num_anchors, embedding.size))
    return np.concatenate([_view_inputs(model, FEATURE_TRANSIENT, geom), tiled], axis=1)


def _tone_inputs(model: SceneModel, illumination: np.ndarray) -> np.ndarray:
    features = np.repeat(model.store[FEATURE_INTRINSIC], model.k, axis=0)
    return np.concatenate([illumination.reshape(-1, 1), features], axis=1)


# ---------------------------------------------------------------------------
# whole-branch decoding


@dataclass(slots=True)
class DecodedGaussians:
    """
    One branch decoded for one camera.

    ``payloads`` holds (G, C) arrays: ``reflectance``, ``illumination`` and ``enhanced`` for
    the intrinsic branch, ``residual`` for the transient one.
    """

    branch: Branch
    means: np.ndarray
    covariances: np.ndarray
    opacities: np.ndarray
    payloads: Dict[str, np.ndarray]
    geometry: ViewGeometry = field(repr=False)
    cache: Dict[str, Any] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.opacities)


def _decode_shape(model: SceneModel, branch: Branch, geom: ViewGeometry, branches: BranchCache | None):
    offsets_name, feature_name, opacity_name, scale_rot_name = _BRANCH_NAMES[branch]
    n, k = model.num_anchors, model.k
    inputs = _view_inputs(model, feature_name, geom)
    alpha_pre, alpha_cache = mlp_forward(model.mlp(opacity_name), inputs, branches=branches, key=f"{branch}.opacity")
    sr_pre, sr_cache = mlp_forward(model.mlp(scale_rot_name), inputs, branches=branches, key=f"{branch}.scale_rot")
    raw = sr_pre.reshape(n, k, 7)
    scales = model.scales[:, None, None] * softplus(raw[..., :3])
    quats = raw[..., 3:]
    means = decode_positions(model.positions, model.store[offsets_name], model.scales)
    cache = {
        "inputs": inputs,
        "alpha_cache": alpha_cache,
        "alpha": sigmoid(alpha_pre),
        "sr_cache": sr_cache,
        "raw": raw,
        "scales": scales,
        "quats": quats,
    }
    return (
        means.reshape(-1, 3),
        build_covariance(scales, quats).reshape(-1, 3, 3),
        cache["alpha"].reshape(-1),
        cache,
    )


def decode_intrinsic(
    model: SceneModel,
    cam: Camera,
    *,
    geometry: ViewGeometry | None = None,
    branches: BranchCache | None = None,
) -> DecodedGaussians:
    geom = geometry or view_geometry(model.positions, cam, branches=branches)
    means, covs, alpha, cache = _decode_shape(model, "intrinsic", geom, branches)
    n, k = model.num_anchors, model.k

    refl_inputs = np.concatenate([model.store[FEATURE_INTRINSIC], geom.delta[:, None]], axis=1)
    refl_pre, cache["refl_cache"] = mlp_forward(
        model.mlp(REFLECTANCE), refl_inputs, branches=branches, key="intrinsic.reflectance"
    )
    illum_pre, cache["illum_cache"] = mlp_forward(
        model.mlp(ILLUMINATION), cache["inputs"], branches=branches, key="intrinsic.illumination"
    )
    reflectance = sigmoid(refl_pre)
    illumination = softplus(illum_pre)
    tone_pre, cache["tone_cache"] = mlp_forward(
        model.mlp(TONE_MAP), _tone_inputs(model, illumination), branches=branches, key="intrinsic.tone_map"
    )
    cache.update(refl=reflectance, illum_pre=illum_pre, tone_pre=tone_pre)
    payloads = {
        "reflectance": reflectance.reshape(n * k, 3),
        "illumination": illumination.reshape(n * k, 1),
        "enhanced": softplus(tone_pre),
    }
    return DecodedGaussians("intrinsic", means, covs, alpha, payloads, geom, cache)


def decode_transient(
    model: SceneModel,
    cam: Camera,
    view_index: int | None,
    *,
    geometry: ViewGeometry | None = None,
    branches: BranchCache | None = None,
) -> DecodedGaussians:
    embedding = model.embedding(view_index)
    geom = geometry or view_geometry(model.positions, cam, branches=branches)
    means, covs, alpha, cache = _decode_shape(model, "transient", geom, branches)
    res_pre, cache["res_cache"] = mlp_forward(
        model.mlp(RESIDUAL), _residual_inputs(model, geom, embedding), branches=branches, key="transient.residual"
    )
    residual = np.tanh(res_pre)
    cache.update(residual=residual, view_index=view_index)
    payloads = {"residual": residual.reshape(-1, 3)}
    return DecodedGaussians("transient", means, covs, alpha, payloads, geom, cache)


def _split_view_grad(grad: np.ndarray, feature_dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return grad[:, :feature_dim], grad[:, feature_dim:feature_dim + 3], grad[:, feature_dim + 3]


def _shape_backward(
    model: SceneModel,
    decoded: DecodedGaussians,
    d_means: np.ndarray,
    d_covs: np.ndarray,
    d_alpha: np.ndarray,
) -> np.ndarray:
    """Back-propagate the geometric attributes; returns the gradient w.r.t. the view inputs."""
    offsets_name, _, opacity_name, scale_rot_name = _BRANCH_NAMES[decoded.branch]
    store, cache = model.store, decoded.cache
    n, k = model.num_anchors, model.k

    d_means = d_means.reshape(n, k, 3)
    store.accumulate(POSITION, d_means.sum(axis=1))
    store.accumulate(offsets_name, d_means * model.scales[:, None, None])

    alpha = cache["alpha"]
    d_alpha_pre = d_alpha.reshape(n, k) * alpha * (1.0 - alpha)
    d_inputs = mlp_backward(store, opacity_name, model.mlp(opacity_name), cache["alpha_cache"], d_alpha_pre)

    d_scales, d_quats = build_covariance_backward(cache["scales"], cache["quats"], d_covs.reshape(n, k, 3, 3))
    raw = cache["raw"]
    d_raw = np.empty_like(raw)
    d_raw[..., :3] = d_scales * model.scales[:, None, None] * sigmoid(raw[..., :3])
    d_raw[..., 3:] = d_quats
    d_inputs = d_inputs + mlp_backward(
        store, scale_rot_name, model.mlp(scale_rot_name), cache["sr_cache"], d_raw.reshape(n, 7 * k)
    )
    return d_inputs


def decode_intrinsic_backward(
    model: SceneModel,
    decoded: DecodedGaussians,
    d_means: np.ndarray,
    d_covs: np.ndarray,
    d_alpha: np.ndarray,
    d_payloads: Dict[str, np.ndarray],
) -> None:
    """Accumulate every intrinsic-branch gradient into ``model.store``."""
    store, cache = model.store, decoded.cache
    n, k, f = model.num_anchors, model.k, model.config.feature_dim
    d_view = _shape_backward(model, decoded, d_means, d_covs, d_alpha)

    d_illum = d_payloads["illumination"].reshape(n, k).copy()
    d_enhanced = d_payloads.get("enhanced")
    if d_enhanced is not None and np.any(d_enhanced):
        d_tone_pre = d_enhanced.reshape(n * k, 3) * sigmoid(cache["tone_pre"])
        d_tone_in = mlp_backward(store, TONE_MAP, model.mlp(TONE_MAP), cache["tone_cache"], d_tone_pre)
        d_illum += d_tone_in[:, 0].reshape(n, k)
        store.accumulate(FEATURE_INTRINSIC, d_tone_in[:, 1:].reshape(n, k, f).sum(axis=1))

    d_illum_pre = d_illum * sigmoid(cache["illum_pre"])
    d_view = d_view + mlp_backward(store, ILLUMINATION, model.mlp(ILLUMINATION), cache["illum_cache"], d_illum_pre)

    refl = cache["refl"]
    d_refl_pre = d_payloads["reflectance"].reshape(n, 3 * k) * refl * (1.0 - refl)
    d_refl_in = mlp_backward(store, REFLECTANCE, model.mlp(REFLECTANCE), cache["refl_cache"], d_refl_pre)

    d_feature, d_direction, d_delta = _split_view_grad(d_view, f)
    store.accumulate(FEATURE_INTRINSIC, d_feature + d_refl_in[:, :f])
    d_delta = d_delta + d_refl_in[:, f]
    store.accumulate(POSITION, view_geometry_backward(decoded.geometry, d_delta, d_direction))


def decode_transient_backward(
    model: SceneModel,
    decoded: DecodedGaussians,
    d_means: np.ndarray,
    d_covs: np.ndarray,
    d_alpha: np.ndarray,
    d_payloads: Dict[str, np.ndarray],
) -> None:
    store, cache = model.store, decoded.cache
    n, k, f = model.num_anchors, model.k, model.config.feature_dim
    d_view = _shape_backward(model, decoded, d_means, d_covs, d_alpha)

    residual = cache["residual"]
    d_res_pre = d_payloads["residual"].reshape(n, 3 * k) * (1.0 - residual ** 2)
    d_res_in = mlp_backward(store, RESIDUAL, model.mlp(RESIDUAL), cache["res_cache"], d_res_pre)
    d_view = d_view + d_res_in[:, :f + 4]
    embedding_grad = np.zeros_like(store[EMBEDDING])
    embedding_grad[cache["view_index"]] = d_res_in[:, f + 4:].sum(axis=0)
    store.accumulate(EMBEDDING, embedding_grad)

    d_feature, d_direction, d_delta = _split_view_grad(d_view, f)
    store.accumulate(FEATURE_TRANSIENT, d_feature)
    store.accumulate(POSITION, view_geometry_backward(decoded.geometry, d_delta, d_direction))


def mean_opacity(model: SceneModel, cams: Sequence[Camera], *, branch: Branch = "intrinsic") -> np.ndarray:
    """(N,) decoded opacity of each anchor, averaged over its children and ``cams``."""
    total = np.zeros(model.num_anchors)
    for cam in cams:
        total += decode_opacity(model, cam, branch=branch).mean(axis=1)
    return total / max(len(cams), 1)


__all__ = [
    "DecodedGaussians",
    "ViewGeometry",
    "build_covariance",
    "build_covariance_backward",
    "decode_enhanced_illumination",
    "decode_illumination",
    "decode_intrinsic",
    "decode_intrinsic_backward",
    "decode_opacity",
    "decode_positions",
    "decode_reflectance",
    "decode_residual",
    "decode_transient",
    "decode_transient_backward",
    "mean_opacity",
    "quaternion_to_rotation",
    "view_geometry",
    "view_geometry_backward",
]
