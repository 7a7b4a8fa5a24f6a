"""Flow cache files and conversion of flow stacks to network input.

Cache format, all little-endian: magic "VFLO", u32 version (1), u32 width,
u32 height, then the u plane and the v plane as row-major float32.
"""

import struct

import numpy as np

from ..errors import DimensionError, InputError
from ..tensor import Tensor
from .tvl1 import FlowField

__all__ = ["write_flow", "read_flow", "flow_to_network_input", "CLIP_BOUND"]

MAGIC = b"VFLO"
VERSION = 1
CLIP_BOUND = 20.0


def write_flow(path, flow: FlowField):
    header = MAGIC + struct.pack("<III", VERSION, flow.width, flow.height)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flow.u.astype("<f4").tobytes())
        fh.write(flow.v.astype("<f4").tobytes())


def read_flow(path) -> FlowField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise InputError(f"{path}: not a flow cache file")
    version, width, height = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        raise InputError(f"{path}: unsupported flow cache version {version}")
    need = 16 + 2 * 4 * width * height
    if len(blob) != need:
        raise InputError(f"{path}: expected {need} bytes, found {len(blob)}")
    plane = width * height
    u = np.frombuffer(blob, dtype="<f4", count=plane, offset=16).reshape(height, width)
    v = np.frombuffer(blob, dtype="<f4", count=plane, offset=16 + 4 * plane).reshape(
        height, width
    )
    return FlowField(u.copy(), v.copy())


def flow_to_network_input(flows, clip_bound: float = CLIP_BOUND) -> Tensor:
    """Stack flow fields into a [1, 2, T, H, W] tensor scaled to [-1, 1].

    Components are clipped to [-clip_bound, clip_bound] first, so a value at
    the bound maps exactly to +-1.
    """
    flows = list(flows)
    if not flows:
        raise InputError("cannot build network input from an empty flow list")
    if clip_bound <= 0:
        raise InputError(f"clip_bound must be positive, got {clip_bound}")
    h, w = flows[0].u.shape
    for f in flows:
        if f.u.shape != (h, w):
            raise DimensionError(
                f"flow sizes differ: {f.u.shape} vs {(h, w)}"
            )
    stack = np.empty((1, 2, len(flows), h, w), dtype=np.float32)
    for t, f in enumerate(flows):
        stack[0, 0, t] = f.u
        stack[0, 1, t] = f.v
    np.clip(stack, -clip_bound, clip_bound, out=stack)
    stack /= clip_bound
    return Tensor(stack)
