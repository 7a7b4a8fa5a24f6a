"""Checkpoint readers: npz archives, PyTorch state dicts, TF checkpoints.

Each reader returns a flat dict of tensor name -> numpy array. Framework
imports are lazy so the common npz path needs nothing beyond numpy.
"""
import os

import numpy as np


class CheckpointError(Exception):
    """Checkpoint file missing, unreadable, or of an unrecognized format."""


def read_checkpoint(path) -> dict:
    path = str(path)
    lower = path.lower()
    if lower.endswith(".npz"):
        return _read_npz(path)
    if lower.endswith((".pt", ".pth")):
        return _read_torch(path)
    return _read_tf(path)


def _read_npz(path):
    if not os.path.exists(path):
        raise CheckpointError(f"{path}: no such file")
    with np.load(path) as archive:
        return {name: np.asarray(archive[name]) for name in archive.files}


def _read_torch(path):
    if not os.path.exists(path):
        raise CheckpointError(f"{path}: no such file")
    try:
        import torch
    except ImportError as exc:
        raise CheckpointError(
            f"{path}: reading PyTorch checkpoints requires the 'torch' package"
        ) from exc
    state = torch.load(path, map_location="cpu", weights_only=True)
    # common wrapper convention: {"state_dict": {...}, "epoch": ..., ...}
    if isinstance(state, dict) and isinstance(state.get("state_dict"), dict):
        state = state["state_dict"]
    if not isinstance(state, dict):
        raise CheckpointError(f"{path}: expected a state dict, got {type(state).__name__}")
    out = {}
    for name, value in state.items():
        if isinstance(value, torch.Tensor):
            value = value.detach().cpu()
            if value.dtype in (torch.bfloat16, torch.float16):
                value = value.float()
            out[str(name)] = value.numpy()
    return out


def _read_tf(path):
    prefix = str(path)
    if prefix.endswith(".index"):
        prefix = prefix[: -len(".index")]
    try:
        import tensorflow as tf
    except ImportError as exc:
        raise CheckpointError(
            f"{path}: reading TensorFlow checkpoints requires the 'tensorflow' package"
        ) from exc
    if os.path.isdir(prefix):
        latest = tf.train.latest_checkpoint(prefix)
        if latest is None:
            raise CheckpointError(f"{path}: directory holds no TensorFlow checkpoint")
        prefix = latest
    if not os.path.exists(prefix + ".index"):
        raise CheckpointError(
            f"{path}: unrecognized checkpoint format "
            "(expected .npz, .pt/.pth, or a TensorFlow checkpoint prefix)"
        )
    try:
        reader = tf.train.load_checkpoint(prefix)
    except Exception as exc:
        raise CheckpointError(f"{path}: cannot read TensorFlow checkpoint: {exc}") from exc
    return {
        name: np.asarray(reader.get_tensor(name))
        for name in reader.get_variable_to_shape_map()
    }
