"""Optimisation stages and the end-to-end training entry point."""

from .base import StageHistory, TrainingStage
from .config import DataConfig, OutputConfig, RunConfig, TrainConfig, config_from_dict, lambda_schedule, load_config
from .dataset import Dataset, View, load_dataset
from .decomposition import Decomposition, PipelineObjective, step_loss, view_schedule
from .results import StageResult, StageStats, TrainingResult
from .trainer import train
from .warmup import DepthWarmup, depth_warmup_refine, mean_depth_loss, warmup_views

__all__ = [
    "DataConfig",
    "Dataset",
    "Decomposition",
    "DepthWarmup",
    "OutputConfig",
    "PipelineObjective",
    "RunConfig",
    "StageHistory",
    "StageResult",
    "StageStats",
    "TrainConfig",
    "TrainingResult",
    "TrainingStage",
    "View",
    "config_from_dict",
    "depth_warmup_refine",
    "lambda_schedule",
    "load_config",
    "load_dataset",
    "mean_depth_loss",
    "step_loss",
    "train",
    "view_schedule",
    "warmup_views",
]
