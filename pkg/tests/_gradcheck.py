"""Finite-difference gradient check for full classifier heads.

Shared between the head unit tests and the acceptance gate. The analytic
gradients come from the production float32 graph; the finite-difference
side re-evaluates the loss in float64 so the h=1e-3 differences are not
drowned by rounding of the loss value itself.
"""
import numpy as np

from viewflow.heads import models as hm
from viewflow.tensor import Tensor, backward, ops

from _oracles import head_loss_f64

H = 1e-3
GRAD_TOL = 1e-3


def check_head_gradients(kind, feature_shape, n, n_classes, seed, coords_per_tensor=24):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n,) + feature_shape).astype(np.float32)
    y = rng.integers(0, n_classes, size=n)
    names = [f"k{idx}" for idx in range(n_classes)]
    model = hm.make_head(kind, names, feature_shape, seed=seed)

    logits = model.logits_graph(Tensor(x))
    loss = ops.cross_entropy(ops.softmax(logits), y)
    for _, p in model.parameters():
        p.zero_grad()
    backward(loss)

    worst = 0.0
    for name, p in model.parameters():
        grad = p.grad_or_zeros().reshape(-1)
        flat = p.data.reshape(-1)
        total = flat.shape[0]
        picks = (
            np.arange(total)
            if total <= coords_per_tensor
            else rng.choice(total, size=coords_per_tensor, replace=False)
        )

        def at(i, keep, step):
            flat[i] = keep + step
            value = head_loss_f64(model, x, y)
            flat[i] = keep
            return value

        tensor_scale = float(np.abs(grad).max())
        if tensor_scale < 3e-6:
            # analytically zero gradient up to float32 cancellation
            # noise (a conv bias is absorbed by the batch norm that
            # follows it); the finite difference must agree it is zero
            for i in picks[:4]:
                keep = flat[i]
                fd = (at(i, keep, H) - at(i, keep, -H)) / (2 * H)
                assert abs(fd) < 1e-6, f"{kind} {name}: fd {fd:.2e} for zero grad"
            continue

        budget = GRAD_TOL * tensor_scale
        numeric, analytic = [], []
        for i in picks:
            keep = flat[i]
            f0 = at(i, keep, 0.0)
            fp, fm = at(i, keep, H), at(i, keep, -H)
            fp2, fm2 = at(i, keep, H / 2), at(i, keep, -H / 2)
            fp4, fm4 = at(i, keep, H / 4), at(i, keep, -H / 4)
            fd_h = (fp - fm) / (2 * H)
            fd_2 = (fp2 - fm2) / H
            fd_4 = (fp4 - fm4) / (H / 2)
            g1 = (fp + fm - 2 * f0) / H
            g2 = (fp2 + fm2 - 2 * f0) / (H / 2)
            # a relu kink inside the window biases the central estimate
            # by half the slope jump, so such coordinates cannot be
            # measured by finite differences at all. A kink near the
            # window edge makes shrinking steps disagree; one near the
            # centre shows up as a forward/backward gap that refuses to
            # halve with the step (a smooth gap is curvature and does).
            # Thresholds sit well under the error budget, so surviving
            # coordinates carry at most a fraction of it.
            kinked = (
                abs(fd_h - fd_2) > 0.3 * budget
                or abs(fd_2 - fd_4) > 0.3 * budget
                or abs(g2) > max(0.75 * abs(g1), budget)
            )
            if kinked:
                continue
            numeric.append(fd_h)
            analytic.append(grad[i])
        # batch norm keeps a share of activations next to the relu
        # threshold, so on busy tensors only a few sampled coordinates
        # sit on smooth ground; two verified ones still pin the tensor,
        # and a wrong gradient would loosen the filter, not tighten it
        assert len(numeric) >= 2, (
            f"{kind} {name}: only {len(numeric)}/{len(picks)} coordinates "
            "clear of relu kinks"
        )
        numeric = np.asarray(numeric)
        analytic = np.asarray(analytic)
        # normalized by the tensor's full gradient scale, since the
        # surviving subset may exclude the largest coordinates
        denom = max(tensor_scale, float(np.abs(numeric).max()))
        err = float(np.abs(numeric - analytic).max()) / denom
        assert err < GRAD_TOL, f"{kind} {name}: rel grad error {err:.2e}"
        worst = max(worst, err)
    return worst
