"""Classifier heads over tap features.

Two heads share one interface: a single linear layer over globally pooled
features (SLP), and a small two-layer 3-d conv stack with per-batch
normalization (Conv3DHead). Both produce logits in the autodiff graph, so
training and the gradient checks drive the exact same code path.
"""

import dataclasses
import json
import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import (
    BatchSizeError,
    BindingError,
    ConfigError,
    DimensionError,
    NumericError,
)
from ..network.container import WeightContainer, read_container, write_container
from ..tensor import Tensor, init, ops

__all__ = [
    "SLPModel",
    "Conv3DHead",
    "make_head",
    "predict",
    "save_checkpoint",
    "load_checkpoint",
    "HEAD_KINDS",
]

HEAD_KINDS = ("slp", "conv3d")


def _check_classes(class_names) -> Tuple[str, ...]:
    names = tuple(class_names)
    if len(names) < 2:
        raise ConfigError(f"a classifier needs at least 2 classes, got {len(names)}")
    if len(set(names)) != len(names):
        raise ConfigError("class names must be unique")
    if list(names) != sorted(names):
        raise ConfigError("class names must be sorted")
    return names


def _check_feature_shape(feature_shape) -> Tuple[int, int, int, int]:
    shape = tuple(int(d) for d in feature_shape)
    if len(shape) != 4 or min(shape) < 1:
        raise ConfigError(f"feature shape must be [C, T, H, W], got {feature_shape}")
    return shape


def _glorot(seed, name, shape, fan_in, fan_out):
    rng = init.param_rng(seed, name)
    return Tensor(init.glorot_uniform(rng, shape, fan_in, fan_out), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)


def _ones(shape):
    return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)


class SLPModel:
    """Softmax regression on globally pooled features."""

    kind = "slp"

    def __init__(self, class_names: Sequence[str], feature_shape, seed: int = 0):
        self.class_names = _check_classes(class_names)
        self.feature_shape = _check_feature_shape(feature_shape)
        self.seed = int(seed)
        c = self.feature_shape[0]
        n = len(self.class_names)
        self.W = _glorot(seed, "slp/weight", (n, c), fan_in=c, fan_out=n)
        self.b = _zeros((n,))

    @property
    def num_classes(self):
        return len(self.class_names)

    def parameters(self) -> List[Tuple[str, Tensor]]:
        return [("slp/weight", self.W), ("slp/bias", self.b)]

    def logits_graph(self, x: Tensor) -> Tensor:
        pooled = ops.global_avg_pool(x)
        return ops.add_channel_bias(ops.matmul(pooled, ops.transpose2d(self.W)), self.b)

    def predict_probs(self, features: np.ndarray, batch_size: int = 16) -> np.ndarray:
        """Row-wise probabilities, computed one example at a time.

        The per-example loop is deliberate: it makes predictions exactly
        independent of how callers batch the input.
        """
        del batch_size  # no batch coupling in a linear model
        w = self.W.data.astype(np.float64)
        b = self.b.data.astype(np.float64)
        out = np.empty((features.shape[0], self.num_classes), dtype=np.float32)
        for i in range(features.shape[0]):
            pooled = features[i].astype(np.float64).mean(axis=(1, 2, 3))
            z = w @ pooled + b
            z -= z.max()
            e = np.exp(z)
            out[i] = (e / e.sum()).astype(np.float32)
        return out


class Conv3DHead:
    """Two conv3d+norm+relu stages, global average pool, linear output."""

    kind = "conv3d"
    channels = (64, 128)

    def __init__(self, class_names: Sequence[str], feature_shape, seed: int = 0):
        self.class_names = _check_classes(class_names)
        self.feature_shape = _check_feature_shape(feature_shape)
        self.seed = int(seed)
        c_in = self.feature_shape[0]
        c1, c2 = self.channels
        n = len(self.class_names)
        k = 27  # 3x3x3 receptive field
        self.k1 = _glorot(seed, "head/conv1/kernel", (c1, c_in, 3, 3, 3), c_in * k, c1 * k)
        self.b1 = _zeros((c1,))
        self.g1 = _ones((c1,))
        self.be1 = _zeros((c1,))
        self.k2 = _glorot(seed, "head/conv2/kernel", (c2, c1, 3, 3, 3), c1 * k, c2 * k)
        self.b2 = _zeros((c2,))
        self.g2 = _ones((c2,))
        self.be2 = _zeros((c2,))
        self.fc_w = _glorot(seed, "head/fc/weight", (n, c2), fan_in=c2, fan_out=n)
        self.fc_b = _zeros((n,))

    @property
    def num_classes(self):
        return len(self.class_names)

    def parameters(self) -> List[Tuple[str, Tensor]]:
        return [
            ("head/conv1/kernel", self.k1),
            ("head/conv1/bias", self.b1),
            ("head/conv1/bn/gamma", self.g1),
            ("head/conv1/bn/beta", self.be1),
            ("head/conv2/kernel", self.k2),
            ("head/conv2/bias", self.b2),
            ("head/conv2/bn/gamma", self.g2),
            ("head/conv2/bn/beta", self.be2),
            ("head/fc/weight", self.fc_w),
            ("head/fc/bias", self.fc_b),
        ]

    @staticmethod
    def _same_pads(dims):
        # 3x3x3 kernels at stride 1: pad 1 on both sides of each axis
        return tuple((1, 1) for _ in dims)

    def logits_graph(self, x: Tensor, normalize: bool = True) -> Tensor:
        pads = self._same_pads(x.data.shape[2:])
        h = ops.conv3d(x, self.k1, stride=(1, 1, 1), padding=pads)
        h = ops.add_channel_bias(h, self.b1)
        if normalize:
            h = ops.batchnorm_batch(h, self.g1, self.be1)
        h = ops.relu(h)
        h = ops.conv3d(h, self.k2, stride=(1, 1, 1), padding=pads)
        h = ops.add_channel_bias(h, self.b2)
        if normalize:
            h = ops.batchnorm_batch(h, self.g2, self.be2)
        h = ops.relu(h)
        pooled = ops.global_avg_pool(h)
        return ops.add_channel_bias(ops.matmul(pooled, ops.transpose2d(self.fc_w)), self.fc_b)

    def predict_probs(self, features: np.ndarray, batch_size: int = 16) -> np.ndarray:
        if batch_size < 2:
            raise BatchSizeError(
                f"per-batch normalization needs batch_size >= 2, got {batch_size}"
            )
        n = features.shape[0]
        if n < 2:
            raise BatchSizeError(f"per-batch normalization needs at least 2 examples, got {n}")
        rows = []
        for lo, hi in _batch_bounds(n, batch_size):
            x = Tensor(features[lo:hi])
            probs = ops.softmax(self.logits_graph(x))
            rows.append(probs.data)
        return np.concatenate(rows, axis=0)


def _batch_bounds(n, batch_size):
    """Contiguous [lo, hi) batch spans; a trailing singleton joins its neighbor."""
    bounds = [(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        lo, _ = bounds.pop()
        bounds[-1] = (bounds[-1][0], n)
    return bounds


def make_head(kind: str, class_names, feature_shape, seed: int = 0):
    if kind == "slp":
        return SLPModel(class_names, feature_shape, seed)
    if kind == "conv3d":
        return Conv3DHead(class_names, feature_shape, seed)
    raise ConfigError(f"unknown head kind {kind!r}; have {list(HEAD_KINDS)}")


def _check_features(model, features) -> np.ndarray:
    arr = np.ascontiguousarray(features, dtype=np.float32)
    if arr.ndim != 5:
        raise DimensionError(f"features must be [N, C, T, H, W], got {arr.shape}")
    if tuple(arr.shape[1:]) != model.feature_shape:
        raise DimensionError(
            f"feature shape {tuple(arr.shape[1:])} does not match the model's"
            f" training shape {model.feature_shape}"
        )
    return arr


def predict(model, features, batch_size: int = 16) -> np.ndarray:
    """Class probabilities per clip, rows summing to 1."""
    arr = _check_features(model, features)
    return model.predict_probs(arr, batch_size=batch_size)


# ---------------------------------------------------------------------------
# checkpoints


def _sidecar_path(path: str) -> str:
    base, _ = os.path.splitext(path)
    return base + ".json"


def save_checkpoint(model, path: str, train_config: Optional[dict] = None) -> str:
    """Write model weights plus a JSON sidecar describing the run."""
    box = WeightContainer()
    for name, tensor in model.parameters():
        box.add(name, tensor.data)
    write_container(path, box)
    meta = {
        "schema": 1,
        "head": model.kind,
        "feature_shape": list(model.feature_shape),
        "class_names": list(model.class_names),
        "train_config": train_config,
        "seed": model.seed,
    }
    sidecar = _sidecar_path(path)
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


def load_checkpoint(path: str):
    """Rebuild a trained head from weights + sidecar. Returns (model, meta)."""
    sidecar = _sidecar_path(path)
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"checkpoint sidecar {sidecar} unreadable: {exc}") from None
    if not isinstance(meta, dict) or meta.get("schema") != 1:
        raise ConfigError(f"checkpoint sidecar {sidecar} has unsupported schema")
    model = make_head(
        meta["head"], meta["class_names"], meta["feature_shape"], meta.get("seed", 0)
    )
    box = read_container(path)
    missing, mismatched = [], []
    for name, tensor in model.parameters():
        if name not in box:
            missing.append(name)
            continue
        arr = box.get(name)
        if arr.shape != tensor.data.shape:
            mismatched.append(f"{name}: file {arr.shape} vs model {tensor.data.shape}")
            continue
        tensor.data[...] = arr
    if missing or mismatched:
        raise BindingError(missing=missing, mismatched=mismatched)
    for name, tensor in model.parameters():
        if not np.all(np.isfinite(tensor.data)):
            raise NumericError(f"checkpoint {path}: tensor {name} has non-finite values")
    return model, meta
