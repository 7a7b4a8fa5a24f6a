"""Forward and backward implementations of the fixed op vocabulary.

Values are float32 end to end; reductions (convolution sums, means and
variances, matrix products) accumulate in float64 and round once at the op
boundary, which keeps desk-scale tests deterministic and close to the
nested-loop oracles.  Convolution is cross-correlation: kernels are applied
without flipping.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import BatchSizeError, DimensionError, LabelError
from .tensor import Tensor, check_finite

__all__ = [
    "conv3d",
    "maxpool3d",
    "avgpool3d",
    "matmul",
    "relu",
    "softmax",
    "cross_entropy",
    "batchnorm_batch",
    "add_channel_bias",
    "channel_affine",
    "global_avg_pool",
    "concat_channels",
    "reshape",
    "normalize_padding",
]

# Patch buffers for im2col-style convolution are chunked along the temporal
# output axis to stay below this many bytes.
_PATCH_BUDGET = 64 << 20


def _result(data, parents, backward, op):
    out = Tensor(data, parents=parents, backward=backward, op=op)
    check_finite(out.data, op)
    return out


def normalize_padding(padding):
    """Accept per-dim ints (symmetric) or (before, after) pairs."""
    pads = []
    for p in padding:
        if np.isscalar(p):
            p = int(p)
            if p < 0:
                raise DimensionError(f"negative padding {p}")
            pads.append((p, p))
        else:
            b, a = int(p[0]), int(p[1])
            if b < 0 or a < 0:
                raise DimensionError(f"negative padding {(b, a)}")
            pads.append((b, a))
    return tuple(pads)


def _out_dim(n, k, stride):
    return (n - k) // stride + 1


def _window_geometry(in_dims, window, stride, pads):
    out = []
    for n, k, s, (pb, pa) in zip(in_dims, window, stride, pads):
        if s < 1:
            raise DimensionError(f"stride must be >= 1, got {s}")
        padded = n + pb + pa
        if k > padded:
            raise DimensionError(
                f"window {window} exceeds padded input dims {in_dims} with pads {pads}"
            )
        out.append(_out_dim(padded, k, s))
    return tuple(out)


def _pad5(x, pads, value=0.0):
    if all(p == (0, 0) for p in pads):
        return x
    return np.pad(x, ((0, 0), (0, 0)) + pads, mode="constant", constant_values=value)


def _offset_slices(out_dims, stride, offset):
    """Slices selecting, for one in-window offset, the padded-input cell
    feeding each output cell."""
    return tuple(
        slice(o, o + (d - 1) * s + 1, s) for o, d, s in zip(offset, out_dims, stride)
    )


def _temporal_chunks(out_t, per_t_bytes):
    step = max(1, int(_PATCH_BUDGET // max(per_t_bytes, 1)))
    for start in range(0, out_t, step):
        yield start, min(start + step, out_t)


# ---------------------------------------------------------------------------
# conv3d


def _conv_patch_buffer(xp, out_dims, window, stride, t0, t1):
    """im2col buffer [N, t1-t0, Ho, Wo, C, kt, kh, kw] in float64."""
    n, c = xp.shape[:2]
    _, ho, wo = out_dims
    kt, kh, kw = window
    st, sh, sw = stride
    buf = np.empty((n, t1 - t0, ho, wo, c, kt, kh, kw), dtype=np.float64)
    base_t = t0 * st
    for x, y, z in itertools.product(range(kt), range(kh), range(kw)):
        src = xp[
            :,
            :,
            base_t + x : base_t + x + (t1 - t0 - 1) * st + 1 : st,
            y : y + (ho - 1) * sh + 1 : sh,
            z : z + (wo - 1) * sw + 1 : sw,
        ]
        buf[..., x, y, z] = src.transpose(0, 2, 3, 4, 1)
    return buf


def conv3d(x: Tensor, kernel: Tensor, stride=(1, 1, 1), padding=(0, 0, 0)) -> Tensor:
    """3D cross-correlation of [N,C,T,H,W] with kernels [K,C,kt,kh,kw].

    Output dims follow floor((dim + pad_before + pad_after - k) / stride) + 1.
    """
    if x.data.ndim != 5 or kernel.data.ndim != 5:
        raise DimensionError(
            f"conv3d expects 5-d input and kernel, got {x.data.shape} and {kernel.data.shape}"
        )
    if x.data.shape[1] != kernel.data.shape[1]:
        raise DimensionError(
            f"input channels {x.data.shape[1]} != kernel channels {kernel.data.shape[1]}"
        )
    stride = tuple(int(s) for s in stride)
    pads = normalize_padding(padding)
    window = kernel.data.shape[2:]
    out_dims = _window_geometry(x.data.shape[2:], window, stride, pads)

    n, c = x.data.shape[:2]
    k_out = kernel.data.shape[0]
    to, ho, wo = out_dims
    kt, kh, kw = window
    xp = _pad5(x.data, pads)
    kmat = kernel.data.reshape(k_out, -1).astype(np.float64)

    per_t = n * ho * wo * c * kt * kh * kw * 8
    out = np.empty((n, k_out, to, ho, wo), dtype=np.float32)
    for t0, t1 in _temporal_chunks(to, per_t):
        buf = _conv_patch_buffer(xp, out_dims, window, stride, t0, t1)
        mat = buf.reshape(-1, c * kt * kh * kw)
        piece = mat @ kmat.T
        out[:, :, t0:t1] = (
            piece.reshape(n, t1 - t0, ho, wo, k_out).transpose(0, 4, 1, 2, 3)
        )

    def grad_fn(g):
        g64 = g.astype(np.float64)
        if kernel.requires_grad:
            gk = np.zeros((k_out, c * kt * kh * kw), dtype=np.float64)
            for t0, t1 in _temporal_chunks(to, per_t):
                buf = _conv_patch_buffer(xp, out_dims, window, stride, t0, t1)
                gmat = g64[:, :, t0:t1].transpose(0, 2, 3, 4, 1).reshape(-1, k_out)
                gk += gmat.T @ buf.reshape(-1, c * kt * kh * kw)
            kernel.accumulate_grad(gk.reshape(kernel.data.shape).astype(np.float32))
        if x.requires_grad:
            gi = np.zeros(xp.shape, dtype=np.float64)
            for t0, t1 in _temporal_chunks(to, per_t):
                gmat = g64[:, :, t0:t1].transpose(0, 2, 3, 4, 1).reshape(-1, k_out)
                gbuf = (gmat @ kmat).reshape(n, t1 - t0, ho, wo, c, kt, kh, kw)
                base_t = t0 * stride[0]
                for xo, yo, zo in itertools.product(range(kt), range(kh), range(kw)):
                    gi[
                        :,
                        :,
                        base_t + xo : base_t + xo + (t1 - t0 - 1) * stride[0] + 1 : stride[0],
                        yo : yo + (ho - 1) * stride[1] + 1 : stride[1],
                        zo : zo + (wo - 1) * stride[2] + 1 : stride[2],
                    ] += gbuf[..., xo, yo, zo].transpose(0, 4, 1, 2, 3)
            (pt, _), (ph, _), (pw, _) = pads
            t_in, h_in, w_in = x.data.shape[2:]
            gi = gi[:, :, pt : pt + t_in, ph : ph + h_in, pw : pw + w_in]
            x.accumulate_grad(gi.astype(np.float32))

    return _result(out, (x, kernel), grad_fn, "conv3d")


# ---------------------------------------------------------------------------
# pooling


def _pool_forward(x, window, stride, pads, kind):
    out_dims = _window_geometry(x.shape[2:], window, stride, pads)
    if kind == "max":
        xp = _pad5(x, pads, value=-np.inf)
        out = np.full(x.shape[:2] + out_dims, -np.inf, dtype=np.float32)
        for off in itertools.product(*(range(k) for k in window)):
            sl = (slice(None), slice(None)) + _offset_slices(out_dims, stride, off)
            np.maximum(out, xp[sl], out=out)
        return out, xp, out_dims, None
    xp = _pad5(x, pads, value=0.0)
    acc = np.zeros(x.shape[:2] + out_dims, dtype=np.float64)
    for off in itertools.product(*(range(k) for k in window)):
        sl = (slice(None), slice(None)) + _offset_slices(out_dims, stride, off)
        acc += xp[sl]
    if all(p == (0, 0) for p in pads):
        count = float(np.prod(window))
    else:
        # Cells hanging over the padding do not enter the mean.
        ones = _pad5(np.ones(x.shape, dtype=np.float64), pads, value=0.0)
        count = np.zeros(x.shape[:2] + out_dims, dtype=np.float64)
        for off in itertools.product(*(range(k) for k in window)):
            sl = (slice(None), slice(None)) + _offset_slices(out_dims, stride, off)
            count += ones[sl]
    return (acc / count).astype(np.float32), xp, out_dims, count


def _pool_op(x: Tensor, window, stride, padding, kind) -> Tensor:
    if x.data.ndim != 5:
        raise DimensionError(f"{kind}pool3d expects [N,C,T,H,W], got {x.data.shape}")
    window = tuple(int(w) for w in window)
    stride = tuple(int(s) for s in stride)
    pads = normalize_padding(padding)
    for (pb, pa), k in zip(pads, window):
        if pb >= k or pa >= k:
            raise DimensionError(
                f"pooling padding {pads} must stay smaller than the window {window}"
            )
    out, xp, out_dims, count = _pool_forward(x.data, window, stride, pads, kind)

    def grad_fn(g):
        if not x.requires_grad:
            return
        gi = np.zeros(xp.shape, dtype=np.float32)
        if kind == "max":
            # Ties route the gradient to the first matching window cell.
            assigned = np.zeros(g.shape, dtype=bool)
            for off in itertools.product(*(range(k) for k in window)):
                sl = (slice(None), slice(None)) + _offset_slices(out_dims, stride, off)
                hit = (xp[sl] == out) & ~assigned
                gi[sl] += np.where(hit, g, 0.0)
                assigned |= hit
        else:
            spread = (g / count).astype(np.float32)
            for off in itertools.product(*(range(k) for k in window)):
                sl = (slice(None), slice(None)) + _offset_slices(out_dims, stride, off)
                gi[sl] += spread
        (pt, _), (ph, _), (pw, _) = pads
        t_in, h_in, w_in = x.data.shape[2:]
        x.accumulate_grad(gi[:, :, pt : pt + t_in, ph : ph + h_in, pw : pw + w_in])

    return _result(out, (x,), grad_fn, f"{kind}pool3d")


def maxpool3d(x: Tensor, window, stride, padding=(0, 0, 0)) -> Tensor:
    """Max over sliding [wt,wh,ww] windows; padded cells never win."""
    return _pool_op(x, window, stride, padding, "max")


def avgpool3d(x: Tensor, window, stride, padding=(0, 0, 0)) -> Tensor:
    """Mean over sliding windows; padded cells are excluded from the mean."""
    return _pool_op(x, window, stride, padding, "avg")


# ---------------------------------------------------------------------------
# dense / activation / loss


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.data.shape}, {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"inner dims disagree: {a.data.shape} x {b.data.shape}")
    out = (a.data.astype(np.float64) @ b.data.astype(np.float64)).astype(np.float32)

    def grad_fn(g):
        g64 = g.astype(np.float64)
        if a.requires_grad:
            a.accumulate_grad((g64 @ b.data.astype(np.float64).T).astype(np.float32))
        if b.requires_grad:
            b.accumulate_grad((a.data.astype(np.float64).T @ g64).astype(np.float32))

    return _result(out, (a, b), grad_fn, "matmul")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(np.where(x.data > 0.0, g, 0.0))

    return _result(out, (x,), grad_fn, "relu")


def softmax(x: Tensor) -> Tensor:
    """Row softmax over the last axis, stabilised by max subtraction."""
    if x.data.ndim != 2:
        raise DimensionError(f"softmax expects [N,C], got {x.data.shape}")
    shifted = x.data.astype(np.float64)
    shifted -= shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = (e / e.sum(axis=1, keepdims=True)).astype(np.float32)

    def grad_fn(g):
        if x.requires_grad:
            p = probs.astype(np.float64)
            g64 = g.astype(np.float64)
            inner = (g64 * p).sum(axis=1, keepdims=True)
            x.accumulate_grad((p * (g64 - inner)).astype(np.float32))

    return _result(probs, (x,), grad_fn, "softmax")


_LOG_FLOOR = 1e-30


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class.

    ``labels`` are integer class indices in [0, C).
    """
    if probs.data.ndim != 2:
        raise DimensionError(f"cross_entropy expects [N,C] probabilities, got {probs.data.shape}")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != probs.data.shape[0]:
        raise DimensionError(f"labels shape {labels.shape} does not match batch {probs.data.shape[0]}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise LabelError(f"labels must be integers, got dtype {labels.dtype}")
    n, c = probs.data.shape
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise LabelError(f"labels out of range [0, {c})")
    picked = probs.data[np.arange(n), labels].astype(np.float64)
    loss = -np.log(np.maximum(picked, _LOG_FLOOR)).mean()

    def grad_fn(g):
        if probs.requires_grad:
            gp = np.zeros((n, c), dtype=np.float64)
            gp[np.arange(n), labels] = -1.0 / (n * np.maximum(picked, _LOG_FLOOR))
            probs.accumulate_grad((gp * np.float64(np.asarray(g).reshape(()))).astype(np.float32))

    return _result(np.float32(loss), (probs,), grad_fn, "cross_entropy")


def batchnorm_batch(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise per channel with statistics of the current batch only.

    No running averages are kept: training and validation both use the
    batch at hand.  Requires N >= 2.
    """
    if x.data.ndim < 2:
        raise DimensionError(f"batchnorm expects [N,C,...], got {x.data.shape}")
    n, c = x.data.shape[:2]
    if n < 2:
        raise BatchSizeError(f"per-batch statistics need N >= 2, got N={n}")
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(f"gamma/beta must have shape ({c},)")
    axes = (0,) + tuple(range(2, x.data.ndim))
    m = x.data.size // c
    x64 = x.data.astype(np.float64)
    mean = x64.mean(axis=axes)
    centered = x64 - _expand(mean, x.data.ndim)
    var = (centered**2).mean(axis=axes)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * _expand(inv_std, x.data.ndim)
    out = (xhat * _expand(gamma.data, x.data.ndim) + _expand(beta.data, x.data.ndim)).astype(
        np.float32
    )

    def grad_fn(g):
        g64 = g.astype(np.float64)
        if beta.requires_grad:
            beta.accumulate_grad(g64.sum(axis=axes).astype(np.float32))
        if gamma.requires_grad:
            gamma.accumulate_grad((g64 * xhat).sum(axis=axes).astype(np.float32))
        if x.requires_grad:
            gxhat = g64 * _expand(gamma.data.astype(np.float64), x.data.ndim)
            sum_g = gxhat.sum(axis=axes)
            sum_gx = (gxhat * xhat).sum(axis=axes)
            gx = (
                gxhat - _expand(sum_g / m, x.data.ndim) - xhat * _expand(sum_gx / m, x.data.ndim)
            ) * _expand(inv_std, x.data.ndim)
            x.accumulate_grad(gx.astype(np.float32))

    return _result(out, (x, gamma, beta), grad_fn, "batchnorm_batch")


def _expand(v, ndim):
    return np.asarray(v).reshape((1, -1) + (1,) * (ndim - 2))


# ---------------------------------------------------------------------------
# glue ops


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias to [N,C,...] or [N,C] activations."""
    c = x.data.shape[1]
    if bias.data.shape != (c,):
        raise DimensionError(f"bias shape {bias.data.shape} does not match channels {c}")
    out = x.data + _expand(bias.data, x.data.ndim)
    axes = (0,) + tuple(range(2, x.data.ndim))

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(g)
        if bias.requires_grad:
            bias.accumulate_grad(g.astype(np.float64).sum(axis=axes).astype(np.float32))

    return _result(out, (x, bias), grad_fn, "add_channel_bias")


def channel_affine(x: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Per-channel y = scale * x + shift (folded stored-statistics norm)."""
    c = x.data.shape[1]
    if scale.data.shape != (c,) or shift.data.shape != (c,):
        raise DimensionError(f"scale/shift must have shape ({c},)")
    out = x.data * _expand(scale.data, x.data.ndim) + _expand(shift.data, x.data.ndim)
    axes = (0,) + tuple(range(2, x.data.ndim))

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(g * _expand(scale.data, x.data.ndim))
        if scale.requires_grad:
            scale.accumulate_grad(
                (g.astype(np.float64) * x.data).sum(axis=axes).astype(np.float32)
            )
        if shift.requires_grad:
            shift.accumulate_grad(g.astype(np.float64).sum(axis=axes).astype(np.float32))

    return _result(out, (x, scale, shift), grad_fn, "channel_affine")


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over every axis after the channel one: [N,C,...] -> [N,C]."""
    if x.data.ndim < 3:
        raise DimensionError(f"global_avg_pool expects [N,C,...], got {x.data.shape}")
    axes = tuple(range(2, x.data.ndim))
    m = int(np.prod([x.data.shape[i] for i in axes]))
    out = x.data.astype(np.float64).mean(axis=axes).astype(np.float32)

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(
                np.broadcast_to(
                    (g / m).reshape(g.shape + (1,) * len(axes)), x.data.shape
                ).astype(np.float32)
            )

    return _result(out, (x,), grad_fn, "global_avg_pool")


def concat_channels(tensors) -> Tensor:
    """Concatenate [N,C_i,...] blocks along the channel axis."""
    tensors = list(tensors)
    base = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape[0] != base[0] or t.data.shape[2:] != base[2:]:
            raise DimensionError("concat_channels requires matching non-channel dims")
    out = np.concatenate([t.data for t in tensors], axis=1)
    edges = np.cumsum([0] + [t.data.shape[1] for t in tensors])

    def grad_fn(g):
        for t, lo, hi in zip(tensors, edges[:-1], edges[1:]):
            if t.requires_grad:
                t.accumulate_grad(g[:, lo:hi])

    return _result(out, tuple(tensors), grad_fn, "concat_channels")


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.data.shape))

    return _result(out, (x,), grad_fn, "reshape")


def transpose2d(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose2d expects a matrix, got {x.data.shape}")
    out = np.ascontiguousarray(x.data.T)

    def grad_fn(g):
        if x.requires_grad:
            x.accumulate_grad(np.ascontiguousarray(g.T))

    return _result(out, (x,), grad_fn, "transpose2d")
