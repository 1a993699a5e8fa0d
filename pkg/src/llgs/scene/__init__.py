from .checkpoint import load_checkpoint, read_checkpoint_header, save_checkpoint
from .decoders import (
    DecodedGaussians,
    ViewGeometry,
    build_covariance,
    decode_enhanced_illumination,
    decode_illumination,
    decode_intrinsic,
    decode_opacity,
    decode_positions,
    decode_reflectance,
    decode_residual,
    decode_transient,
    quaternion_to_rotation,
    view_geometry,
)
from .mlp import MlpParams, mlp_backward, mlp_forward
from .model import Anchor, ModelConfig, SceneModel

__all__ = [
    "Anchor",
    "DecodedGaussians",
    "MlpParams",
    "ModelConfig",
    "SceneModel",
    "ViewGeometry",
    "build_covariance",
    "decode_enhanced_illumination",
    "decode_illumination",
    "decode_intrinsic",
    "decode_opacity",
    "decode_positions",
    "decode_reflectance",
    "decode_residual",
    "decode_transient",
    "load_checkpoint",
    "mlp_backward",
    "mlp_forward",
    "quaternion_to_rotation",
    "read_checkpoint_header",
    "save_checkpoint",
    "view_geometry",
]
