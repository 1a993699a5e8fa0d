"""Low-light Gaussian splatting: anchor initialization, intrinsic/transient decomposition and enhancement."""

from .errors import ConfigError, DataError, LlgsError, NumericalAbort, UsageError
from .geometry import Camera, Image, PointCloud, project_point
from .llgim import (
    AnchorSet,
    PruneConfig,
    build_anchor_candidates,
    preservation_probability,
    stochastic_prune,
    update_threshold,
)
from .losses import LossBundle, depth_pcc_loss, total_loss
from .metrics import affine_align_luminance, psnr, ssim
from .ply import load_ply, save_ply
from .recording import TrainingRecorder
from .renderers import ComponentMaps, compose_enhanced, compose_low, render_components
from .scene import SceneModel, load_checkpoint, save_checkpoint
from .synth import SynthBundle, SynthSpec, generate, write_bundle
from .training import Dataset, TrainConfig, TrainingResult, depth_warmup_refine, lambda_schedule, train

__all__ = [
    "AnchorSet",
    "Camera",
    "ComponentMaps",
    "ConfigError",
    "DataError",
    "Dataset",
    "Image",
    "LlgsError",
    "LossBundle",
    "NumericalAbort",
    "PointCloud",
    "PruneConfig",
    "SceneModel",
    "SynthBundle",
    "SynthSpec",
    "TrainConfig",
    "TrainingRecorder",
    "TrainingResult",
    "UsageError",
    "affine_align_luminance",
    "build_anchor_candidates",
    "compose_enhanced",
    "compose_low",
    "depth_pcc_loss",
    "depth_warmup_refine",
    "generate",
    "lambda_schedule",
    "load_checkpoint",
    "load_ply",
    "preservation_probability",
    "project_point",
    "psnr",
    "render_components",
    "save_checkpoint",
    "save_ply",
    "ssim",
    "stochastic_prune",
    "total_loss",
    "train",
    "update_threshold",
    "write_bundle",
]
