"""Classifier heads trained on tap features."""

from .models import (
    HEAD_KINDS,
    Conv3DHead,
    SLPModel,
    load_checkpoint,
    make_head,
    predict,
    save_checkpoint,
)
from .train import TrainConfig, TrainResult, accuracy, stack_features, train

__all__ = [
    "HEAD_KINDS",
    "Conv3DHead",
    "SLPModel",
    "load_checkpoint",
    "make_head",
    "predict",
    "save_checkpoint",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "stack_features",
    "train",
]
