"""Anchor-based dual-branch scene representation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Any, Dict

import numpy as np

from ..errors import ConfigError, DataError
from ..optim.params import ParamStore
from .mlp import MlpParams, mlp_params, register_mlp

if TYPE_CHECKING:
    from ..llgim import AnchorSet
    from ..optim.adam import AdamState

logger = logging.getLogger(__name__)

POSITION = "anchor.position"
OFFSETS_INTRINSIC = "anchor.offsets.intrinsic"
OFFSETS_TRANSIENT = "anchor.offsets.transient"
FEATURE_INTRINSIC = "anchor.feature.intrinsic"
FEATURE_TRANSIENT = "anchor.feature.transient"
EMBEDDING = "embedding"

OPACITY = "mlp.opacity"
SCALE_ROT = "mlp.scale_rot"
REFLECTANCE = "mlp.reflectance"
ILLUMINATION = "mlp.illumination"
TONE_MAP = "mlp.tone_map"
OPACITY_TRANSIENT = "mlp.opacity_transient"
SCALE_ROT_TRANSIENT = "mlp.scale_rot_transient"
RESIDUAL = "mlp.residual"

PER_ANCHOR = (POSITION, OFFSETS_INTRINSIC, OFFSETS_TRANSIENT, FEATURE_INTRINSIC, FEATURE_TRANSIENT)

# learning-rate groups
GROUP_POSITION = "position"
GROUP_OFFSET_INTRINSIC = "offset.intrinsic"
GROUP_OFFSET_TRANSIENT = "offset.transient"
GROUP_FEATURE = "feature"
GROUP_OPACITY = "decoder.opacity"
GROUP_COVARIANCE = "decoder.covariance"
GROUP_DECOMPOSITION = "decoder.decomposition"
GROUP_TONE_MAP = "tone_map"
GROUP_EMBEDDING = "embedding"

# sigmoid(-2.197) ~ 0.1 and softplus(-1.05) ~ 0.3
_OPACITY_BIAS = -2.197
_SCALE_BIAS = -1.05


@dataclass(frozen=True, slots=True)
class ModelConfig:
    """Network sizes: Gaussians per anchor, feature width, hidden width, embedding width."""

    gaussians_per_anchor: int = 10
    feature_dim: int = 32
    hidden_dim: int = 32
    embedding_dim: int = 16

    def __post_init__(self) -> None:
        for name in ("gaussians_per_anchor", "feature_dim", "hidden_dim", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be at least 1.")

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass(frozen=True, slots=True)
class Anchor:
    """Snapshot of one anchor's parameters."""

    position: np.ndarray
    scale: float
    offsets_intrinsic: np.ndarray
    offsets_transient: np.ndarray
    feature_intrinsic: np.ndarray
    feature_transient: np.ndarray

    @property
    def k(self) -> int:
        return len(self.offsets_intrinsic)


class SceneModel:
    """
    Parameters of the scene live in a :class:`ParamStore`; anchor scales ``l_v`` and anchor
    provenance ids are fixed arrays kept beside it.
    """

    def __init__(
        self,
        store: ParamStore,
        scales: np.ndarray,
        config: ModelConfig,
        *,
        anchor_ids: np.ndarray | None = None,
    ) -> None:
        scales = np.asarray(scales, dtype=np.float64).reshape(-1)
        if np.any(scales <= 0.0):
            raise DataError("Anchor scales must be positive.")
        if len(scales) != store[POSITION].shape[0]:
            raise DataError("One scale per anchor is required.")
        self.store = store
        self.scales = scales
        self.config = config
        self.anchor_ids = (
            np.arange(len(scales), dtype=np.int64)
            if anchor_ids is None
            else np.asarray(anchor_ids, dtype=np.int64).reshape(-1)
        )

    @classmethod
    def from_anchors(
        cls,
        anchors: "AnchorSet",
        num_views: int,
        config: ModelConfig | None = None,
        *,
        seed: int = 0,
    ) -> "SceneModel":
        """Fresh parameters for ``anchors``: zero features, small random offsets, seeded decoders."""
        config = config or ModelConfig()
        if len(anchors) == 0:
            raise DataError("Cannot build a scene without anchors.")
        if num_views < 1:
            raise DataError("At least one training view is required.")
        rng = np.random.default_rng(seed)
        n, k, f = len(anchors), config.gaussians_per_anchor, config.feature_dim
        hidden, r_e = config.hidden_dim, config.embedding_dim
        store = ParamStore()
        store.register(POSITION, anchors.positions, GROUP_POSITION)
        store.register(OFFSETS_INTRINSIC, rng.uniform(-0.5, 0.5, (n, k, 3)), GROUP_OFFSET_INTRINSIC)
        store.register(OFFSETS_TRANSIENT, rng.uniform(-0.5, 0.5, (n, k, 3)), GROUP_OFFSET_TRANSIENT)
        store.register(FEATURE_INTRINSIC, np.zeros((n, f)), GROUP_FEATURE)
        store.register(FEATURE_TRANSIENT, np.zeros((n, f)), GROUP_FEATURE)

        view_in = f + 4
        scale_rot_bias = np.tile([_SCALE_BIAS] * 3 + [1.0, 0.0, 0.0, 0.0], k)
        register_mlp(store, OPACITY, view_in, hidden, k, GROUP_OPACITY, rng, out_scale=0.1, out_bias=_OPACITY_BIAS)
        register_mlp(store, SCALE_ROT, view_in, hidden, 7 * k, GROUP_COVARIANCE, rng, out_scale=0.1, out_bias=scale_rot_bias)
        register_mlp(store, REFLECTANCE, f + 1, hidden, 3 * k, GROUP_DECOMPOSITION, rng)
        register_mlp(store, ILLUMINATION, view_in, hidden, k, GROUP_DECOMPOSITION, rng)
        register_mlp(store, TONE_MAP, 1 + f, hidden, 3, GROUP_TONE_MAP, rng)
        register_mlp(
            store, OPACITY_TRANSIENT, view_in, hidden, k, GROUP_OPACITY, rng, out_scale=0.1, out_bias=_OPACITY_BIAS
        )
        register_mlp(
            store, SCALE_ROT_TRANSIENT, view_in, hidden, 7 * k, GROUP_COVARIANCE, rng, out_scale=0.1, out_bias=scale_rot_bias
        )
        register_mlp(store, RESIDUAL, view_in + r_e, hidden, 3 * k, GROUP_DECOMPOSITION, rng, out_scale=0.1)
        store.register(EMBEDDING, rng.normal(0.0, 0.1, (num_views, r_e)), GROUP_EMBEDDING)
        logger.info("Scene initialised with %d anchors x %d Gaussians, %d views", n, k, num_views)
        return cls(store, anchors.scales, config, anchor_ids=anchors.ids)

    @property
    def num_anchors(self) -> int:
        return len(self.scales)

    @property
    def num_views(self) -> int:
        return self.store[EMBEDDING].shape[0]

    @property
    def k(self) -> int:
        return self.config.gaussians_per_anchor

    @property
    def positions(self) -> np.ndarray:
        return self.store[POSITION]

    def mlp(self, name: str) -> MlpParams:
        return mlp_params(self.store, name)

    def embedding(self, view_index: int | None) -> np.ndarray:
        if view_index is None or not 0 <= view_index < self.num_views:
            raise DataError(
                f"No embedding for view index {view_index!r}; the scene has {self.num_views} training views."
            )
        return self.store[EMBEDDING][view_index]

    def anchor(self, index: int) -> Anchor:
        s = self.store
        return Anchor(
            position=s[POSITION][index].copy(),
            scale=float(self.scales[index]),
            offsets_intrinsic=s[OFFSETS_INTRINSIC][index].copy(),
            offsets_transient=s[OFFSETS_TRANSIENT][index].copy(),
            feature_intrinsic=s[FEATURE_INTRINSIC][index].copy(),
            feature_transient=s[FEATURE_TRANSIENT][index].copy(),
        )

    def keep_anchors(self, keep: np.ndarray, adam: "AdamState | None" = None) -> int:
        """Drop every anchor not selected by the boolean mask ``keep``; returns the number removed."""
        keep = np.asarray(keep, dtype=bool).reshape(-1)
        if keep.shape != self.scales.shape:
            raise ValueError("Mask must have one entry per anchor.")
        if not keep.any():
            raise ValueError("Refusing to remove every anchor.")
        removed = int((~keep).sum())
        if removed:
            self.store.take_rows(PER_ANCHOR, keep)
            if adam is not None:
                adam.take_rows(PER_ANCHOR, keep)
            self.scales = self.scales[keep].copy()
            self.anchor_ids = self.anchor_ids[keep].copy()
        return removed

    def copy(self) -> "SceneModel":
        return SceneModel(self.store.copy(), self.scales.copy(), self.config, anchor_ids=self.anchor_ids.copy())

    def all_finite(self) -> bool:
        return self.store.all_finite()

    def summary(self) -> Dict[str, Any]:
        return {
            "anchors": self.num_anchors,
            "gaussians_per_anchor": self.k,
            "views": self.num_views,
            "parameters": sum(p.size for p in self.store),
            "config": self.config.to_dict(),
        }

