"""Seeded parameter initialisation.

Every parameter gets its own counter-based stream derived from the run seed
and the parameter name, so adding or reordering parameters never shifts the
draws of the others.
"""

import hashlib

import numpy as np

__all__ = ["param_rng", "glorot_uniform", "conv_fans", "linear_fans"]


def param_rng(seed: int, name: str) -> np.random.Generator:
    digest = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) ^ np.uint64(digest)))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-a, a, size=shape).astype(np.float32)


def conv_fans(kernel_shape):
    """(fan_in, fan_out) for a [K, C, kt, kh, kw] kernel."""
    k, c = kernel_shape[0], kernel_shape[1]
    receptive = 1
    for d in kernel_shape[2:]:
        receptive *= d
    return c * receptive, k * receptive


def linear_fans(weight_shape):
    """(fan_in, fan_out) for a [in, out] weight."""
    return weight_shape[0], weight_shape[1]
