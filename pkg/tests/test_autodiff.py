"""Gradient checks by central differences, and graph mechanics."""

import numpy as np
import pytest

from viewflow.tensor import (
    Tensor,
    add_channel_bias,
    avgpool3d,
    backward,
    batchnorm_batch,
    channel_affine,
    concat_channels,
    conv3d,
    cross_entropy,
    global_avg_pool,
    matmul,
    maxpool3d,
    relu,
    reshape,
    softmax,
)
from viewflow.errors import GraphError

import _oracles as oracle

H = 1e-3
GRAD_TOL = 1e-3


def _weighted_sum(t, rng):
    """Random fixed projection to a scalar, so grads probe all outputs."""
    w = rng.standard_normal(t.data.shape).astype(np.float32)
    return w, float((t.data.astype(np.float64) * w).sum())


def check_grad(build, x0, seed, coords=None):
    """build(Tensor) -> Tensor output; compares analytic vs numeric d(sum w*out)/dx."""
    rng = np.random.default_rng(seed)
    x = Tensor(x0, requires_grad=True)
    out = build(x)
    w, _ = _weighted_sum(out, rng)

    def scalar(values):
        o = build(Tensor(values))
        return float((o.data.astype(np.float64) * w).sum())

    seed_out = Tensor(
        np.float32(0.0), parents=(out,), backward=lambda g: out.accumulate_grad(w * g), op="probe"
    )
    backward(seed_out)
    flat = x.grad.reshape(-1)
    if coords is None:
        coords = np.arange(x0.size)
    numeric = oracle.central_difference(scalar, x0, coords, h=H)
    assert oracle.rel_error(flat[coords], numeric) < GRAD_TOL


@pytest.mark.parametrize("seed", range(5))
def test_conv3d_input_grad(seed):
    rng = np.random.default_rng(1000 + seed)
    x = rng.standard_normal((2, 2, 4, 5, 5)).astype(np.float32)
    kern = rng.standard_normal((3, 2, 2, 3, 3)).astype(np.float32)
    check_grad(
        lambda t: conv3d(t, Tensor(kern), stride=(1, 2, 1), padding=(1, 1, (0, 1))),
        x,
        seed,
    )


@pytest.mark.parametrize("seed", range(5))
def test_conv3d_kernel_grad(seed):
    rng = np.random.default_rng(1100 + seed)
    x = rng.standard_normal((2, 2, 4, 5, 5)).astype(np.float32)
    kern = rng.standard_normal((3, 2, 2, 3, 3)).astype(np.float32)
    check_grad(
        lambda t: conv3d(Tensor(x), t, stride=(1, 1, 2), padding=(0, 1, 1)),
        kern,
        seed,
    )


@pytest.mark.parametrize("seed", range(3))
def test_maxpool_grad(seed):
    rng = np.random.default_rng(1200 + seed)
    # Distinct values, so the max location is stable under the probe step.
    x = rng.permutation(np.arange(2 * 2 * 4 * 4 * 4, dtype=np.float32)).reshape(2, 2, 4, 4, 4)
    x /= 16.0
    check_grad(lambda t: maxpool3d(t, (2, 2, 2), (1, 2, 2), (0, 1, 1)), x, seed)


@pytest.mark.parametrize("seed", range(3))
def test_avgpool_grad(seed):
    rng = np.random.default_rng(1300 + seed)
    x = rng.standard_normal((2, 2, 4, 4, 4)).astype(np.float32)
    check_grad(lambda t: avgpool3d(t, (2, 3, 3), (2, 1, 1), (1, 1, 0)), x, seed)


@pytest.mark.parametrize("seed", range(3))
def test_matmul_grads(seed):
    rng = np.random.default_rng(1400 + seed)
    a = rng.standard_normal((4, 6)).astype(np.float32)
    b = rng.standard_normal((6, 3)).astype(np.float32)
    check_grad(lambda t: matmul(t, Tensor(b)), a, seed)
    check_grad(lambda t: matmul(Tensor(a), t), b, seed + 50)


@pytest.mark.parametrize("seed", range(3))
def test_relu_grad(seed):
    rng = np.random.default_rng(1500 + seed)
    x = rng.standard_normal((3, 7)).astype(np.float32)
    x[np.abs(x) < 0.05] = 0.5  # keep clear of the kink
    check_grad(relu, x, seed)


@pytest.mark.parametrize("seed", range(3))
def test_softmax_grad(seed):
    rng = np.random.default_rng(1600 + seed)
    x = rng.standard_normal((4, 5)).astype(np.float32)
    check_grad(softmax, x, seed)


@pytest.mark.parametrize("seed", range(3))
def test_softmax_cross_entropy_grad(seed):
    rng = np.random.default_rng(1700 + seed)
    x = rng.standard_normal((5, 4)).astype(np.float32)
    labels = rng.integers(0, 4, size=5)

    x_t = Tensor(x, requires_grad=True)
    loss = cross_entropy(softmax(x_t), labels)
    backward(loss)

    def scalar(values):
        return cross_entropy(softmax(Tensor(values)), labels).item()

    numeric = oracle.central_difference(scalar, x, np.arange(x.size), h=H)
    assert oracle.rel_error(x_t.grad.reshape(-1), numeric) < GRAD_TOL
    # Classic identity: d loss / d logits = (p - onehot) / N.
    probs = oracle.softmax_rows(x).astype(np.float64)
    probs[np.arange(5), labels] -= 1.0
    assert oracle.rel_error(x_t.grad, probs / 5.0) < 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_batchnorm_grads(seed):
    rng = np.random.default_rng(1800 + seed)
    x = (rng.standard_normal((4, 3, 2, 2, 2)) * 2).astype(np.float32)
    gamma = rng.standard_normal(3).astype(np.float32) + 1.5
    beta = rng.standard_normal(3).astype(np.float32)
    check_grad(
        lambda t: batchnorm_batch(t, Tensor(gamma), Tensor(beta)), x, seed,
        coords=np.random.default_rng(seed).choice(x.size, 24, replace=False),
    )
    check_grad(lambda t: batchnorm_batch(Tensor(x), t, Tensor(beta)), gamma, seed + 10)
    check_grad(lambda t: batchnorm_batch(Tensor(x), Tensor(gamma), t), beta, seed + 20)


def test_glue_op_grads():
    rng = np.random.default_rng(42)
    x = rng.standard_normal((2, 3, 2, 2, 2)).astype(np.float32)
    bias = rng.standard_normal(3).astype(np.float32)
    check_grad(lambda t: add_channel_bias(t, Tensor(bias)), x, 1)
    check_grad(lambda t: add_channel_bias(Tensor(x), t), bias, 2)
    check_grad(global_avg_pool, x, 3)
    check_grad(lambda t: reshape(t, (2, 24)), x, 4)
    scale = rng.standard_normal(3).astype(np.float32)
    check_grad(lambda t: channel_affine(t, Tensor(scale), Tensor(bias)), x, 5)
    check_grad(lambda t: channel_affine(Tensor(x), t, Tensor(bias)), scale, 6)
    y = rng.standard_normal((2, 2, 2, 2, 2)).astype(np.float32)
    check_grad(lambda t: concat_channels([t, Tensor(y)]), x, 7)


def test_reused_tensor_accumulates():
    x = Tensor(np.array([[1.0, 2.0]], dtype=np.float32), requires_grad=True)
    y = matmul(x, Tensor(np.eye(2, dtype=np.float32)))
    z = matmul(x, Tensor(2 * np.eye(2, dtype=np.float32)))
    total = add_channel_bias(
        reshape(y, (1, 2)), Tensor(np.zeros(2, dtype=np.float32))
    )
    s = Tensor(
        np.float32(y.data.sum() + z.data.sum()),
        parents=(y, z),
        backward=lambda g: (
            y.accumulate_grad(np.full_like(y.data, g)),
            z.accumulate_grad(np.full_like(z.data, g)),
        ),
        op="sum2",
    )
    del total
    backward(s)
    assert np.allclose(x.grad, [[3.0, 3.0]])


def test_backward_returns_zero_for_unused_params():
    used = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    unused = Tensor(np.ones((3,), dtype=np.float32), requires_grad=True)
    out = matmul(used, Tensor(np.ones((2, 1), dtype=np.float32)))
    loss = Tensor(
        np.float32(out.data.sum()),
        parents=(out,),
        backward=lambda g: out.accumulate_grad(np.full_like(out.data, g)),
        op="sum",
    )
    grads = backward(loss, params=[used, unused])
    assert grads[0].shape == (2, 2) and np.any(grads[0] != 0)
    assert grads[1].shape == (3,) and not np.any(grads[1] != 0)


def test_backward_requires_scalar():
    t = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    out = relu(t)
    with pytest.raises(GraphError):
        backward(out)


def test_inference_mode_drops_graph():
    x = Tensor(np.ones((2, 2), dtype=np.float32))  # requires_grad=False
    out = matmul(x, Tensor(np.ones((2, 2), dtype=np.float32)))
    assert out._parents == ()
    assert not out.requires_grad


def test_detach_blocks_gradient():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    d = relu(x).detach()
    out = matmul(d, Tensor(np.ones((2, 2), dtype=np.float32)))
    loss = Tensor(
        np.float32(out.data.sum()),
        parents=(out,),
        backward=lambda g: out.accumulate_grad(np.full_like(out.data, g)),
        op="sum",
    )
    backward(loss, params=[x])
    assert x.grad is None or not np.any(x.grad)


def test_deep_chain_does_not_recurse():
    t = Tensor(np.ones((1, 4), dtype=np.float32), requires_grad=True)
    cur = t
    for _ in range(3000):
        cur = relu(cur)
    loss = Tensor(
        np.float32(cur.data.sum()),
        parents=(cur,),
        backward=lambda g: cur.accumulate_grad(np.full_like(cur.data, g)),
        op="sum",
    )
    backward(loss)
    assert np.allclose(t.grad, 1.0)
