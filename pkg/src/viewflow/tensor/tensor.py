"""Dense float32 tensors with reverse-mode automatic differentiation.

The op graph is held implicitly: every non-leaf tensor remembers its parent
tensors and a closure that routes the output gradient back to them.  Calling
:func:`backward` on a scalar loss walks that graph once in reverse
topological order.  Ops never mutate their inputs, so evaluating independent
graphs from different threads is safe; a single graph must not be extended
concurrently.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, GraphError, NumericError

__all__ = ["Tensor", "as_f32", "check_finite", "backward"]


def as_f32(data) -> np.ndarray:
    """Coerce array-likes to a float32 ndarray without copying when possible."""
    return np.ascontiguousarray(data, dtype=np.float32)


def check_finite(arr: np.ndarray, context: str) -> np.ndarray:
    """NaN/Inf is an error state for every tensor operation."""
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {context}")
    return arr


class Tensor:
    """A dense row-major float32 array, optionally tracked for gradients.

    Attributes
    ----------
    data : np.ndarray
        float32 payload; its length always equals the product of the shape.
    requires_grad : bool
        Leaf tensors marked trainable accumulate gradients in ``grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, *, parents=(), backward=None, op="leaf"):
        self.data = as_f32(data)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        # Graph edges are kept only while some parent needs a gradient, so
        # inference-mode forwards free intermediates as they go.
        if self.requires_grad and parents:
            self._parents = tuple(parents)
            self._backward = backward
        else:
            self._parents = ()
            self._backward = None
        self.op = op
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def accumulate_grad(self, g: np.ndarray):
        g = np.asarray(g, dtype=np.float32)
        if g.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def grad_or_zeros(self) -> np.ndarray:
        """Gradient slot; parameters untouched by the loss get exact zeros."""
        if self.grad is None:
            return np.zeros(self.data.shape, dtype=np.float32)
        return self.grad

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={tuple(self.data.shape)}, op={self.op!r}, requires_grad={self.requires_grad})"


def _topo_order(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params=None):
    """Reverse-mode gradients of a scalar ``loss``.

    Every trainable tensor reachable from the loss gets its ``grad`` filled;
    when ``params`` is given, returns their gradients in order, with exact
    zeros for parameters that do not influence the loss.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    loss.accumulate_grad(np.ones(loss.data.shape, dtype=np.float32))
    for node in reversed(_topo_order(loss)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if params is not None:
        return [p.grad_or_zeros() for p in params]
    return None
