"""Backbone assembly and execution.

load_network binds a weight container (or a seeded random init) against a
NetworkSpec and returns a Network whose forward pass runs the declared
layers in order. Backbone batch normalization applies the stored
statistics as a per-channel affine map, which is the right semantics for
the single-clip batches the extractor feeds it.
"""

import dataclasses
from typing import Optional

import numpy as np

from ..errors import BindingError, DimensionError
from ..tensor import Tensor, init, ops
from .container import WeightContainer
from .spec import NetworkSpec, parameter_bindings, resolve_padding

__all__ = ["FeatureBlock", "Network", "load_network", "random_container", "forward_to_tap"]

BN_EPS = 1e-5


@dataclasses.dataclass
class FeatureBlock:
    """Tap activations for one clip, laid out [C, T, H, W]."""

    values: np.ndarray
    clip_id: Optional[str] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 4:
            raise DimensionError(f"feature block must be 4-d, got {self.values.shape}")

    @property
    def channels(self):
        return self.values.shape[0]


def random_container(spec: NetworkSpec, seed: int) -> WeightContainer:
    """Seeded random weights: uniform Glorot kernels, identity-ish norms.

    Each tensor gets its own RNG stream keyed by (seed, name), so adding
    or removing one binding never shifts the values of the others.
    """
    container = WeightContainer()
    for name, shape in parameter_bindings(spec):
        rng = init.param_rng(seed, name)
        if name.endswith("/conv/kernel"):
            fan_in, fan_out = init.conv_fans(shape)
            container.add(name, init.glorot_uniform(rng, shape, fan_in, fan_out))
        elif name.endswith("/bn/gamma") or name.endswith("/bn/var"):
            container.add(name, np.ones(shape, dtype=np.float32))
        else:  # bias, beta, mean
            container.add(name, np.zeros(shape, dtype=np.float32))
    return container


def _bind(spec: NetworkSpec, weights: WeightContainer):
    missing = []
    mismatched = []
    params = {}
    for name, shape in parameter_bindings(spec):
        if name not in weights:
            missing.append(name)
            continue
        arr = weights.get(name)
        if tuple(arr.shape) != tuple(shape):
            mismatched.append(f"{name}: container {tuple(arr.shape)} vs spec {tuple(shape)}")
            continue
        params[name] = arr
    if missing or mismatched:
        raise BindingError(missing=missing, mismatched=mismatched)
    return params


class _ConvUnit:
    """conv (+ optional bias) + folded batchnorm + relu, the backbone staple."""

    def __init__(self, params, prefix, stride, padding, kernel, bias, bn_gamma, relu=True):
        self.kernel = Tensor(params[f"{prefix}/conv/kernel"])
        self.bias = Tensor(params[f"{prefix}/conv/bias"]) if bias else None
        self.stride = stride
        self.padding = padding
        self.kernel_dims = kernel
        self.relu = relu
        beta = params[f"{prefix}/bn/beta"].astype(np.float64)
        mean = params[f"{prefix}/bn/mean"].astype(np.float64)
        var = params[f"{prefix}/bn/var"].astype(np.float64)
        gamma = params[f"{prefix}/bn/gamma"].astype(np.float64) if bn_gamma else np.ones_like(beta)
        scale = gamma / np.sqrt(var + BN_EPS)
        self.scale = Tensor(scale.astype(np.float32))
        self.shift = Tensor((beta - mean * scale).astype(np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        dims = x.data.shape[2:]
        pads = resolve_padding(self.padding, dims, self.kernel_dims, self.stride)
        out = ops.conv3d(x, self.kernel, stride=self.stride, padding=pads)
        if self.bias is not None:
            out = ops.add_channel_bias(out, self.bias)
        out = ops.channel_affine(out, self.scale, self.shift)
        if self.relu:
            out = ops.relu(out)
        return out


def _build_layer(spec, layer, params):
    if layer.kind == "conv3d":
        # The spec interleaves conv / batchnorm / relu as separate layers;
        # the conv applies only its own kernel here.
        kernel = Tensor(params[f"{layer.name}/conv/kernel"])
        bias = Tensor(params[f"{layer.name}/conv/bias"]) if layer.bias else None

        def conv(x, kernel=kernel, bias=bias, layer=layer):
            pads = resolve_padding(layer.padding, x.data.shape[2:], layer.kernel, layer.stride)
            out = ops.conv3d(x, kernel, stride=layer.stride, padding=pads)
            return ops.add_channel_bias(out, bias) if bias is not None else out

        return conv
    if layer.kind == "batchnorm":
        beta = params[f"{layer.name}/bn/beta"].astype(np.float64)
        mean = params[f"{layer.name}/bn/mean"].astype(np.float64)
        var = params[f"{layer.name}/bn/var"].astype(np.float64)
        gamma = (
            params[f"{layer.name}/bn/gamma"].astype(np.float64)
            if spec.bn_gamma
            else np.ones_like(beta)
        )
        scale_np = gamma / np.sqrt(var + BN_EPS)
        scale = Tensor(scale_np.astype(np.float32))
        shift = Tensor((beta - mean * scale_np).astype(np.float32))
        return lambda x: ops.channel_affine(x, scale, shift)
    if layer.kind == "relu":
        return ops.relu
    if layer.kind in ("maxpool3d", "avgpool3d"):
        pool = ops.maxpool3d if layer.kind == "maxpool3d" else ops.avgpool3d

        def pooled(x, layer=layer, pool=pool):
            pads = resolve_padding(layer.padding, x.data.shape[2:], layer.window, layer.stride)
            return pool(x, window=layer.window, stride=layer.stride, padding=pads)

        return pooled
    if layer.kind == "inception":
        b0, (r1, b1), (r2, b2), b3 = (
            layer.branches[0][0],
            layer.branches[1],
            layer.branches[2],
            layer.branches[3][0],
        )

        def unit(suffix, stride=(1, 1, 1), padding="same", kernel=(1, 1, 1)):
            return _ConvUnit(
                params, f"{layer.name}/{suffix}", stride, padding, kernel, False, spec.bn_gamma
            )

        branch0 = unit("Branch_0/Conv3d_0a_1x1")
        branch1a = unit("Branch_1/Conv3d_0a_1x1")
        branch1b = unit("Branch_1/Conv3d_0b_3x3", kernel=(3, 3, 3))
        branch2a = unit("Branch_2/Conv3d_0a_1x1")
        branch2b = unit("Branch_2/Conv3d_0b_3x3", kernel=(3, 3, 3))
        branch3b = unit("Branch_3/Conv3d_0b_1x1")

        def inception(x):
            p0 = branch0(x)
            p1 = branch1b(branch1a(x))
            p2 = branch2b(branch2a(x))
            dims = x.data.shape[2:]
            pads = resolve_padding("same", dims, (3, 3, 3), (1, 1, 1))
            pooled = ops.maxpool3d(x, window=(3, 3, 3), stride=(1, 1, 1), padding=pads)
            p3 = branch3b(pooled)
            return ops.concat_channels((p0, p1, p2, p3))

        return inception
    if layer.kind == "logits":
        kernel = Tensor(params[f"{layer.name}/conv/kernel"])
        bias = Tensor(params[f"{layer.name}/conv/bias"])
        return lambda x: ops.add_channel_bias(
            ops.conv3d(x, kernel, stride=(1, 1, 1), padding=(0, 0, 0)), bias
        )
    raise AssertionError(layer.kind)


class Network:
    def __init__(self, spec: NetworkSpec, params):
        self.spec = spec
        self.params = params
        self._layers = [_build_layer(spec, layer, params) for layer in spec.layers]

    def _check_input(self, x: np.ndarray):
        if x.ndim != 5:
            raise DimensionError(f"network input must be [N, C, T, H, W], got {x.shape}")
        n, c, t, h, w = x.shape
        s = self.spec
        if c != s.input_channels:
            raise DimensionError(f"network expects {s.input_channels} channels, got {c}")
        if t < s.min_frames:
            raise DimensionError(
                f"network needs at least {s.min_frames} frames, got {t}"
            )
        if h != s.input_size or w != s.input_size:
            raise DimensionError(
                f"network expects {s.input_size}x{s.input_size} frames, got {h}x{w}"
            )

    def forward(self, x, upto: Optional[int] = None, keep_all: bool = False):
        """Run layers 0..upto inclusive (default: all).

        Returns the final activation array, or the list of every layer's
        activation when keep_all is set. Layers past `upto` are never
        evaluated.
        """
        if isinstance(x, Tensor):
            x = x.data
        arr = np.ascontiguousarray(x, dtype=np.float32)
        self._check_input(arr)
        last = len(self._layers) - 1 if upto is None else upto
        if not 0 <= last < len(self._layers):
            raise DimensionError(f"layer index {upto} outside 0..{len(self._layers) - 1}")
        cur = Tensor(arr)
        outputs = []
        for fn in self._layers[: last + 1]:
            cur = fn(cur)
            if keep_all:
                outputs.append(cur.data)
        return outputs if keep_all else cur.data


def load_network(spec: NetworkSpec, weights: Optional[WeightContainer] = None, seed: int = 17) -> Network:
    """Bind weights to a spec; a missing container means seeded random init.

    Raises BindingError listing every missing and shape-mismatched name at
    once when the container does not satisfy the spec.
    """
    if weights is None:
        weights = random_container(spec, seed)
    return Network(spec, _bind(spec, weights))


def forward_to_tap(network: Network, x, clip_id: Optional[str] = None) -> FeatureBlock:
    """Run the backbone up to (and including) the tap layer."""
    out = network.forward(x, upto=network.spec.tap_layer)
    if out.shape[0] != 1:
        raise DimensionError(f"tap expects a single-clip batch, got N={out.shape[0]}")
    return FeatureBlock(values=out[0], clip_id=clip_id)
