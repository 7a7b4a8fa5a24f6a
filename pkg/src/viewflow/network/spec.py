"""Network topology descriptions.

A NetworkSpec is an ordered list of layer descriptors plus the input
geometry the backbone expects. Specs are data, not code: they can be
serialized to JSON, and two builtin topologies ("i3d-flow" and "reduced")
ship with the package. Padding may be declared as "same", "valid", or an
explicit per-axis integer list; "same" is resolved to concrete
(before, after) pads against the actual input dims at execution time, the
way TensorFlow computes them.
"""

import dataclasses
import json
import math
from typing import Optional, Sequence, Tuple

from ..errors import ConfigError, InputError

__all__ = [
    "Layer",
    "NetworkSpec",
    "builtin_spec",
    "load_spec",
    "same_pads",
    "resolve_padding",
    "compute_shapes",
    "parameter_bindings",
    "BUILTIN_SPECS",
]

LAYER_KINDS = ("conv3d", "batchnorm", "relu", "maxpool3d", "avgpool3d", "inception", "logits")

# Branch unit names follow the Inception v1 convention so converted
# checkpoints keep their familiar structure.
BRANCH_UNITS = (
    ("Branch_0", ("Conv3d_0a_1x1",)),
    ("Branch_1", ("Conv3d_0a_1x1", "Conv3d_0b_3x3")),
    ("Branch_2", ("Conv3d_0a_1x1", "Conv3d_0b_3x3")),
    ("Branch_3", ("Conv3d_0b_1x1",)),
)


@dataclasses.dataclass(frozen=True)
class Layer:
    kind: str
    name: Optional[str] = None
    out_channels: Optional[int] = None
    kernel: Optional[Tuple[int, int, int]] = None
    stride: Tuple[int, int, int] = (1, 1, 1)
    padding: object = "valid"
    bias: bool = False
    window: Optional[Tuple[int, int, int]] = None
    # Inception: ((b0,), (b1_reduce, b1), (b2_reduce, b2), (b3,))
    branches: Optional[Tuple[Tuple[int, ...], ...]] = None


@dataclasses.dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_channels: int
    input_size: int
    min_frames: int
    layers: Tuple[Layer, ...]
    tap_layer: int
    bn_gamma: bool = True

    def __post_init__(self):
        if not self.layers:
            raise ConfigError(f"spec {self.name!r} has no layers")
        if not 0 <= self.tap_layer < len(self.layers):
            raise ConfigError(
                f"spec {self.name!r}: tap layer {self.tap_layer} outside 0..{len(self.layers) - 1}"
            )
        if self.input_channels < 1 or self.input_size < 1 or self.min_frames < 1:
            raise ConfigError(f"spec {self.name!r}: input geometry must be positive")
        for idx, layer in enumerate(self.layers):
            _validate_layer(self.name, idx, layer)
        # Chain shapes once at construction so a malformed topology fails
        # here rather than deep inside a forward pass.
        compute_shapes(self)

    @property
    def feature_shape(self) -> Tuple[int, int, int, int]:
        """Tap output dims [C, T, H, W] for a minimum-length input."""
        return compute_shapes(self)[self.tap_layer]


def _validate_layer(spec_name, idx, layer):
    where = f"spec {spec_name!r} layer {idx}"
    if layer.kind not in LAYER_KINDS:
        raise ConfigError(f"{where}: unknown kind {layer.kind!r}")
    if layer.kind in ("conv3d", "batchnorm", "inception", "logits") and not layer.name:
        raise ConfigError(f"{where}: {layer.kind} requires a name")
    if layer.kind == "conv3d":
        if not layer.kernel or len(layer.kernel) != 3 or min(layer.kernel) < 1:
            raise ConfigError(f"{where}: bad kernel {layer.kernel}")
        if not layer.out_channels or layer.out_channels < 1:
            raise ConfigError(f"{where}: bad out_channels {layer.out_channels}")
    if layer.kind == "logits" and (not layer.out_channels or layer.out_channels < 1):
        raise ConfigError(f"{where}: bad out_channels {layer.out_channels}")
    if layer.kind in ("maxpool3d", "avgpool3d"):
        if not layer.window or len(layer.window) != 3 or min(layer.window) < 1:
            raise ConfigError(f"{where}: bad window {layer.window}")
    if layer.kind == "inception":
        b = layer.branches
        ok = (
            b is not None
            and len(b) == 4
            and len(b[0]) == 1
            and len(b[1]) == 2
            and len(b[2]) == 2
            and len(b[3]) == 1
            and all(c >= 1 for branch in b for c in branch)
        )
        if not ok:
            raise ConfigError(f"{where}: branches must be ((b0,),(r1,b1),(r2,b2),(b3,))")
    if min(layer.stride) < 1:
        raise ConfigError(f"{where}: bad stride {layer.stride}")
    if isinstance(layer.padding, str):
        if layer.padding not in ("same", "valid"):
            raise ConfigError(f"{where}: padding must be 'same', 'valid', or integers")
    else:
        pads = tuple(layer.padding)
        if len(pads) != 3 or any(int(p) < 0 for p in pads):
            raise ConfigError(f"{where}: bad padding {layer.padding}")


def same_pads(dim: int, kernel: int, stride: int) -> Tuple[int, int]:
    """(before, after) zero pads so out = ceil(dim / stride)."""
    total = max((math.ceil(dim / stride) - 1) * stride + kernel - dim, 0)
    before = total // 2
    return before, total - before


def resolve_padding(padding, dims, kernel, stride):
    """Turn a declared padding into three explicit (before, after) pairs."""
    if padding == "same":
        return tuple(same_pads(d, k, s) for d, k, s in zip(dims, kernel, stride))
    if padding == "valid":
        return ((0, 0), (0, 0), (0, 0))
    return tuple((int(p), int(p)) for p in padding)


def _window_out(dim, kernel, stride, pads):
    span = dim + pads[0] + pads[1] - kernel
    if span < 0:
        return -1
    return span // stride + 1


def _layer_out_shape(spec_name, idx, layer, shape):
    c, dims = shape[0], shape[1:]
    if layer.kind in ("batchnorm", "relu"):
        return shape
    if layer.kind == "logits":
        return (layer.out_channels,) + dims
    if layer.kind == "inception":
        out_c = layer.branches[0][0] + layer.branches[1][1] + layer.branches[2][1] + layer.branches[3][0]
        return (out_c,) + dims
    window = layer.kernel if layer.kind == "conv3d" else layer.window
    pads = resolve_padding(layer.padding, dims, window, layer.stride)
    out_dims = tuple(
        _window_out(d, k, s, p) for d, k, s, p in zip(dims, window, layer.stride, pads)
    )
    if min(out_dims) < 1:
        raise ConfigError(
            f"spec {spec_name!r} layer {idx} ({layer.kind}): window {window} does not fit"
            f" input dims {dims} with stride {layer.stride}"
        )
    out_c = layer.out_channels if layer.kind == "conv3d" else c
    return (out_c,) + out_dims


def compute_shapes(spec: NetworkSpec, input_dims=None):
    """Per-layer output shapes [C, T, H, W].

    input_dims defaults to the spec's minimum geometry; pass (T, H, W) to
    chain a different input through.
    """
    if input_dims is None:
        input_dims = (spec.min_frames, spec.input_size, spec.input_size)
    shape = (spec.input_channels,) + tuple(int(d) for d in input_dims)
    shapes = []
    for idx, layer in enumerate(spec.layers):
        shape = _layer_out_shape(spec.name, idx, layer, shape)
        shapes.append(shape)
    return shapes


def _unit_bindings(prefix, in_c, out_c, kernel, bn_gamma, bias):
    """conv + batchnorm parameter names for one conv unit."""
    out = [(f"{prefix}/conv/kernel", (out_c, in_c) + tuple(kernel))]
    if bias:
        out.append((f"{prefix}/conv/bias", (out_c,)))
    out.append((f"{prefix}/bn/beta", (out_c,)))
    if bn_gamma:
        out.append((f"{prefix}/bn/gamma", (out_c,)))
    out.append((f"{prefix}/bn/mean", (out_c,)))
    out.append((f"{prefix}/bn/var", (out_c,)))
    return out


def parameter_bindings(spec: NetworkSpec):
    """Ordered (name, shape) pairs for every tensor the spec binds."""
    bindings = []
    channels = spec.input_channels
    bn_channels = None
    for layer in spec.layers:
        if layer.kind == "conv3d":
            bindings.append(
                (f"{layer.name}/conv/kernel", (layer.out_channels, channels) + tuple(layer.kernel))
            )
            if layer.bias:
                bindings.append((f"{layer.name}/conv/bias", (layer.out_channels,)))
            bn_channels = channels = layer.out_channels
        elif layer.kind == "batchnorm":
            if bn_channels is None:
                raise ConfigError(f"spec {spec.name!r}: batchnorm {layer.name!r} has no preceding conv")
            bindings.append((f"{layer.name}/bn/beta", (bn_channels,)))
            if spec.bn_gamma:
                bindings.append((f"{layer.name}/bn/gamma", (bn_channels,)))
            bindings.append((f"{layer.name}/bn/mean", (bn_channels,)))
            bindings.append((f"{layer.name}/bn/var", (bn_channels,)))
        elif layer.kind == "inception":
            b0, (r1, b1), (r2, b2), b3 = (
                layer.branches[0][0],
                layer.branches[1],
                layer.branches[2],
                layer.branches[3][0],
            )
            plan = [
                ("Branch_0/Conv3d_0a_1x1", channels, b0, (1, 1, 1)),
                ("Branch_1/Conv3d_0a_1x1", channels, r1, (1, 1, 1)),
                ("Branch_1/Conv3d_0b_3x3", r1, b1, (3, 3, 3)),
                ("Branch_2/Conv3d_0a_1x1", channels, r2, (1, 1, 1)),
                ("Branch_2/Conv3d_0b_3x3", r2, b2, (3, 3, 3)),
                ("Branch_3/Conv3d_0b_1x1", channels, b3, (1, 1, 1)),
            ]
            for unit, in_c, out_c, kernel in plan:
                bindings.extend(
                    _unit_bindings(f"{layer.name}/{unit}", in_c, out_c, kernel, spec.bn_gamma, False)
                )
            channels = b0 + b1 + b2 + b3
        elif layer.kind == "logits":
            bindings.append((f"{layer.name}/conv/kernel", (layer.out_channels, channels, 1, 1, 1)))
            bindings.append((f"{layer.name}/conv/bias", (layer.out_channels,)))
            channels = layer.out_channels
    return bindings


# ---------------------------------------------------------------------------
# builtin topologies


def _conv_bn_relu(name, out_channels, kernel, stride=(1, 1, 1)):
    return [
        Layer("conv3d", name=name, out_channels=out_channels, kernel=kernel,
              stride=stride, padding="same"),
        Layer("batchnorm", name=name),
        Layer("relu"),
    ]


def _reduced_spec():
    layers = []
    layers += _conv_bn_relu("Conv3d_1a_3x3", 16, (3, 3, 3), stride=(1, 2, 2))
    layers.append(Layer("maxpool3d", window=(1, 3, 3), stride=(1, 2, 2), padding="same"))
    layers += _conv_bn_relu("Conv3d_2b_3x3", 32, (3, 3, 3))
    layers.append(Layer("maxpool3d", window=(2, 2, 2), stride=(2, 2, 2), padding="valid"))
    layers += _conv_bn_relu("Conv3d_3b_3x3", 48, (3, 3, 3))
    layers.append(Layer("maxpool3d", window=(1, 2, 2), stride=(1, 2, 2), padding="valid"))
    layers += _conv_bn_relu("Conv3d_4b_3x3", 64, (3, 3, 3))
    layers.append(Layer("inception", name="Mixed_5", branches=((32,), (16, 32), (8, 16), (16,))))
    layers.append(Layer("avgpool3d", window=(2, 4, 4), stride=(1, 1, 1), padding="valid"))
    layers.append(Layer("logits", name="Logits", out_channels=32))
    return NetworkSpec(
        name="reduced",
        input_channels=2,
        input_size=64,
        min_frames=8,
        layers=tuple(layers),
        tap_layer=len(layers) - 2,
        bn_gamma=True,
    )


_I3D_MIXED = {
    "Mixed_3b": ((64,), (96, 128), (16, 32), (32,)),
    "Mixed_3c": ((128,), (128, 192), (32, 96), (64,)),
    "Mixed_4b": ((192,), (96, 208), (16, 48), (64,)),
    "Mixed_4c": ((160,), (112, 224), (24, 64), (64,)),
    "Mixed_4d": ((128,), (128, 256), (24, 64), (64,)),
    "Mixed_4e": ((112,), (144, 288), (32, 64), (64,)),
    "Mixed_4f": ((256,), (160, 320), (32, 128), (128,)),
    "Mixed_5b": ((256,), (160, 320), (32, 128), (128,)),
    "Mixed_5c": ((384,), (192, 384), (48, 128), (128,)),
}


def _i3d_flow_spec():
    layers = []
    layers += _conv_bn_relu("Conv3d_1a_7x7", 64, (7, 7, 7), stride=(2, 2, 2))
    layers.append(Layer("maxpool3d", window=(1, 3, 3), stride=(1, 2, 2), padding="same"))
    layers += _conv_bn_relu("Conv3d_2b_1x1", 64, (1, 1, 1))
    layers += _conv_bn_relu("Conv3d_2c_3x3", 192, (3, 3, 3))
    layers.append(Layer("maxpool3d", window=(1, 3, 3), stride=(1, 2, 2), padding="same"))
    layers.append(Layer("inception", name="Mixed_3b", branches=_I3D_MIXED["Mixed_3b"]))
    layers.append(Layer("inception", name="Mixed_3c", branches=_I3D_MIXED["Mixed_3c"]))
    layers.append(Layer("maxpool3d", window=(3, 3, 3), stride=(2, 2, 2), padding="same"))
    for name in ("Mixed_4b", "Mixed_4c", "Mixed_4d", "Mixed_4e", "Mixed_4f"):
        layers.append(Layer("inception", name=name, branches=_I3D_MIXED[name]))
    layers.append(Layer("maxpool3d", window=(2, 2, 2), stride=(2, 2, 2), padding="same"))
    layers.append(Layer("inception", name="Mixed_5b", branches=_I3D_MIXED["Mixed_5b"]))
    layers.append(Layer("inception", name="Mixed_5c", branches=_I3D_MIXED["Mixed_5c"]))
    layers.append(Layer("avgpool3d", window=(2, 7, 7), stride=(1, 1, 1), padding="valid"))
    layers.append(Layer("logits", name="Logits/Conv3d_0c_1x1", out_channels=400))
    return NetworkSpec(
        name="i3d-flow",
        input_channels=2,
        input_size=224,
        min_frames=16,
        layers=tuple(layers),
        tap_layer=len(layers) - 2,
        bn_gamma=False,
    )


BUILTIN_SPECS = {"reduced": _reduced_spec, "i3d-flow": _i3d_flow_spec}


def builtin_spec(name: str) -> NetworkSpec:
    if name not in BUILTIN_SPECS:
        raise ConfigError(f"unknown builtin spec {name!r}; have {sorted(BUILTIN_SPECS)}")
    return BUILTIN_SPECS[name]()


# ---------------------------------------------------------------------------
# JSON round trip


def _layer_to_json(layer: Layer):
    out = {"kind": layer.kind}
    if layer.name:
        out["name"] = layer.name
    if layer.kind == "conv3d":
        out.update(out_channels=layer.out_channels, kernel=list(layer.kernel),
                   stride=list(layer.stride), padding=_padding_json(layer.padding),
                   bias=layer.bias)
    elif layer.kind == "logits":
        out["out_channels"] = layer.out_channels
    elif layer.kind in ("maxpool3d", "avgpool3d"):
        out.update(window=list(layer.window), stride=list(layer.stride),
                   padding=_padding_json(layer.padding))
    elif layer.kind == "inception":
        out["branches"] = [list(b) for b in layer.branches]
    return out


def _padding_json(padding):
    return padding if isinstance(padding, str) else list(padding)


def _layer_from_json(obj):
    kind = obj.get("kind")
    kwargs = {"kind": kind, "name": obj.get("name")}
    if "out_channels" in obj:
        kwargs["out_channels"] = int(obj["out_channels"])
    if "kernel" in obj:
        kwargs["kernel"] = tuple(int(v) for v in obj["kernel"])
    if "window" in obj:
        kwargs["window"] = tuple(int(v) for v in obj["window"])
    if "stride" in obj:
        kwargs["stride"] = tuple(int(v) for v in obj["stride"])
    if "padding" in obj:
        p = obj["padding"]
        kwargs["padding"] = p if isinstance(p, str) else tuple(int(v) for v in p)
    if "bias" in obj:
        kwargs["bias"] = bool(obj["bias"])
    if "branches" in obj:
        kwargs["branches"] = tuple(tuple(int(v) for v in b) for b in obj["branches"])
    return Layer(**kwargs)


def spec_to_json(spec: NetworkSpec) -> dict:
    return {
        "schema": 1,
        "name": spec.name,
        "input_channels": spec.input_channels,
        "input_size": spec.input_size,
        "min_frames": spec.min_frames,
        "tap_layer": spec.tap_layer,
        "bn_gamma": spec.bn_gamma,
        "layers": [_layer_to_json(layer) for layer in spec.layers],
    }


def spec_from_json(obj: dict) -> NetworkSpec:
    if not isinstance(obj, dict) or obj.get("schema") != 1:
        raise InputError("network spec JSON must be an object with schema 1")
    try:
        return NetworkSpec(
            name=str(obj["name"]),
            input_channels=int(obj["input_channels"]),
            input_size=int(obj["input_size"]),
            min_frames=int(obj["min_frames"]),
            layers=tuple(_layer_from_json(o) for o in obj["layers"]),
            tap_layer=int(obj["tap_layer"]),
            bn_gamma=bool(obj.get("bn_gamma", True)),
        )
    except KeyError as exc:
        raise InputError(f"network spec JSON missing field {exc}") from None


def load_spec(name_or_path: str) -> NetworkSpec:
    """Resolve a builtin spec name, or load a JSON spec from a path."""
    if name_or_path in BUILTIN_SPECS:
        return BUILTIN_SPECS[name_or_path]()
    try:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read network spec {name_or_path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"network spec {name_or_path!r} is not valid JSON: {exc}") from None
    return spec_from_json(obj)
