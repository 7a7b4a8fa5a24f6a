from .tensor import Tensor, backward, check_finite
from .ops import (
    add_channel_bias,
    avgpool3d,
    batchnorm_batch,
    channel_affine,
    concat_channels,
    conv3d,
    cross_entropy,
    global_avg_pool,
    matmul,
    maxpool3d,
    normalize_padding,
    relu,
    reshape,
    softmax,
    transpose2d,
)
from .init import conv_fans, glorot_uniform, linear_fans, param_rng

__all__ = [
    "Tensor",
    "backward",
    "check_finite",
    "conv3d",
    "maxpool3d",
    "avgpool3d",
    "matmul",
    "relu",
    "softmax",
    "transpose2d",
    "cross_entropy",
    "batchnorm_batch",
    "add_channel_bias",
    "channel_affine",
    "global_avg_pool",
    "concat_channels",
    "reshape",
    "normalize_padding",
    "param_rng",
    "glorot_uniform",
    "conv_fans",
    "linear_fans",
]
