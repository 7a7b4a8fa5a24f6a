"""Head training: SGD with momentum on softmax cross-entropy."""

import dataclasses
import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, DataError, LabelError, NumericError, TrainingError
from ..tensor import Tensor, backward, ops
from .models import _batch_bounds, make_head, predict

__all__ = ["TrainConfig", "TrainResult", "train", "accuracy", "stack_features"]

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 16
    max_epochs: int = 100
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be at least 2 (per-batch normalization), got {self.batch_size}"
            )
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.early_stop_patience < 1:
            raise ConfigError(
                f"early_stop_patience must be at least 1, got {self.early_stop_patience}"
            )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class TrainResult:
    model: object
    losses: List[float]
    stopped_early: bool

    @property
    def epochs(self):
        return len(self.losses)


def stack_features(features) -> np.ndarray:
    """Stack blocks / arrays into one [N, C, T, H, W] float32 array."""
    if isinstance(features, np.ndarray) and features.ndim == 5:
        return np.ascontiguousarray(features, dtype=np.float32)
    arrays = []
    for f in features:
        arr = getattr(f, "values", f)
        arrays.append(np.asarray(arr, dtype=np.float32))
    if not arrays:
        raise DataError("no training features")
    return np.stack(arrays, axis=0)


def _encode_labels(labels, class_names: Optional[Sequence[str]]):
    labels = list(labels)
    if class_names is None:
        names = sorted(set(labels))
    else:
        names = sorted(class_names)
    index = {name: i for i, name in enumerate(names)}
    unknown = sorted({l for l in labels if l not in index})
    if unknown:
        raise LabelError(f"labels not in the class set: {', '.join(unknown)}")
    counts = {name: 0 for name in names}
    for l in labels:
        counts[l] += 1
    empty = [name for name in names if counts[name] == 0]
    if empty:
        raise DataError(f"classes with zero training examples: {', '.join(empty)}")
    return names, np.array([index[l] for l in labels], dtype=np.int64)


def train(kind: str, features, labels, cfg: TrainConfig, class_names=None) -> TrainResult:
    """Train a fresh head of the given kind on labeled feature blocks.

    Deterministic for a fixed config: initialization, shuffling, and the
    optimizer all key off cfg.seed.
    """
    x = stack_features(features)
    labels = list(labels)
    if len(labels) != x.shape[0]:
        raise DataError(f"{x.shape[0]} feature blocks but {len(labels)} labels")
    names, y = _encode_labels(labels, class_names)
    model = make_head(kind, names, x.shape[1:], cfg.seed)
    params = model.parameters()
    velocity = {name: np.zeros_like(t.data) for name, t in params}
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]

    losses: List[float] = []
    best = math.inf
    wait = 0
    stopped = False
    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        total = 0.0
        for lo, hi in _batch_bounds(n, cfg.batch_size):
            idx = perm[lo:hi]
            xb = Tensor(x[idx])
            try:
                logits = model.logits_graph(xb)
                loss = ops.cross_entropy(ops.softmax(logits), y[idx])
                for _, p in params:
                    p.zero_grad()
                backward(loss)
            except NumericError as exc:
                raise TrainingError(
                    f"training diverged at epoch {epoch}: {exc}", epoch=epoch
                ) from None
            for name, p in params:
                v = velocity[name]
                v *= cfg.momentum
                v += p.grad_or_zeros()
                p.data -= cfg.learning_rate * v
            total += float(loss.item()) * len(idx)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise TrainingError(
                f"training loss became non-finite at epoch {epoch}", epoch=epoch
            )
        losses.append(epoch_loss)
        if epoch_loss < best:
            best = epoch_loss
            wait = 0
        else:
            wait += 1
            if wait >= cfg.early_stop_patience:
                stopped = True
                log.debug("early stop at epoch %d (no improvement for %d epochs)",
                          epoch, wait)
                break
    return TrainResult(model=model, losses=losses, stopped_early=stopped)


def accuracy(model, features, labels, batch_size: int = 16) -> float:
    """Top-1 accuracy in percent. Argmax ties go to the lowest class index."""
    probs = predict(model, stack_features(features), batch_size=batch_size)
    predicted = np.argmax(probs, axis=1)
    index = {name: i for i, name in enumerate(model.class_names)}
    y = np.array([index[l] for l in labels], dtype=np.int64)
    return float(np.mean(predicted == y) * 100.0)
