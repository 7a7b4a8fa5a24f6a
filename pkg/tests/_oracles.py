"""Independent reference implementations used to check the real ones.

Everything here is written the slow, obvious way: nested loops, explicit
padding, no shared code with the package.  Loops accumulate in float64.
"""

import numpy as np


def rel_error(a, b, tiny=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), tiny)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def pad5(x, pads, value=0.0):
    out = np.full(
        (
            x.shape[0],
            x.shape[1],
            x.shape[2] + pads[0][0] + pads[0][1],
            x.shape[3] + pads[1][0] + pads[1][1],
            x.shape[4] + pads[2][0] + pads[2][1],
        ),
        value,
        dtype=np.float64,
    )
    out[
        :,
        :,
        pads[0][0] : pads[0][0] + x.shape[2],
        pads[1][0] : pads[1][0] + x.shape[3],
        pads[2][0] : pads[2][0] + x.shape[4],
    ] = x
    return out


def as_pairs(padding):
    return tuple((p, p) if np.isscalar(p) else (int(p[0]), int(p[1])) for p in padding)


def conv3d_loops(x, kernel, stride=(1, 1, 1), padding=(0, 0, 0)):
    """Cross-correlation, seven explicit loops."""
    pads = as_pairs(padding)
    xp = pad5(np.asarray(x, dtype=np.float64), pads)
    n, c, tp, hp, wp = xp.shape
    k, _, kt, kh, kw = kernel.shape
    st, sh, sw = stride
    to = (tp - kt) // st + 1
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    out = np.zeros((n, k, to, ho, wo), dtype=np.float64)
    kern = np.asarray(kernel, dtype=np.float64)
    for b in range(n):
        for f in range(k):
            for t in range(to):
                for i in range(ho):
                    for j in range(wo):
                        acc = 0.0
                        for ch in range(c):
                            for dt in range(kt):
                                for di in range(kh):
                                    for dj in range(kw):
                                        acc += (
                                            xp[b, ch, t * st + dt, i * sh + di, j * sw + dj]
                                            * kern[f, ch, dt, di, dj]
                                        )
                        out[b, f, t, i, j] = acc
    return out.astype(np.float32)


def maxpool3d_loops(x, window, stride, padding=(0, 0, 0)):
    pads = as_pairs(padding)
    xp = pad5(np.asarray(x, dtype=np.float64), pads, value=-np.inf)
    n, c, tp, hp, wp = xp.shape
    kt, kh, kw = window
    st, sh, sw = stride
    to = (tp - kt) // st + 1
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    out = np.zeros((n, c, to, ho, wo), dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for t in range(to):
                for i in range(ho):
                    for j in range(wo):
                        out[b, ch, t, i, j] = xp[
                            b, ch, t * st : t * st + kt, i * sh : i * sh + kh, j * sw : j * sw + kw
                        ].max()
    return out.astype(np.float32)


def avgpool3d_loops(x, window, stride, padding=(0, 0, 0)):
    """Mean over in-bounds cells only (padding does not dilute the mean)."""
    pads = as_pairs(padding)
    xp = pad5(np.asarray(x, dtype=np.float64), pads, value=np.nan)
    n, c, tp, hp, wp = xp.shape
    kt, kh, kw = window
    st, sh, sw = stride
    to = (tp - kt) // st + 1
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    out = np.zeros((n, c, to, ho, wo), dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for t in range(to):
                for i in range(ho):
                    for j in range(wo):
                        win = xp[
                            b, ch, t * st : t * st + kt, i * sh : i * sh + kh, j * sw : j * sw + kw
                        ]
                        out[b, ch, t, i, j] = win[~np.isnan(win)].mean()
    return out.astype(np.float32)


def matmul_loops(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, k = a.shape
    _, m = b.shape
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out.astype(np.float32)


def softmax_rows(x):
    x = np.asarray(x, dtype=np.float64)
    x = x - x.max(axis=1, keepdims=True)
    e = np.exp(x)
    return (e / e.sum(axis=1, keepdims=True)).astype(np.float32)


def cross_entropy_value(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    total = 0.0
    for i, lab in enumerate(labels):
        total += -np.log(max(probs[i, lab], 1e-30))
    return total / len(labels)


def batchnorm_loops(x, gamma, beta, eps=1e-5):
    """Per-channel batch statistics computed with explicit accumulation."""
    x = np.asarray(x, dtype=np.float64)
    c = x.shape[1]
    out = np.empty_like(x)
    moved = np.moveaxis(x, 1, 0).reshape(c, -1)
    for ch in range(c):
        vals = moved[ch]
        mean = vals.sum() / vals.size
        var = ((vals - mean) ** 2).sum() / vals.size
        norm = (x[:, ch] - mean) / np.sqrt(var + eps)
        out[:, ch] = norm * gamma[ch] + beta[ch]
    return out.astype(np.float32)


def make_texture(h, w, seed, sigma=1.5):
    """Smoothed random texture in [0,1] with enough gradient everywhere."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    t = ndimage.gaussian_filter(rng.random((h, w)), sigma, mode="nearest")
    t -= t.min()
    t /= max(t.max(), 1e-9)
    return t.astype(np.float32)


def translation_pair(h, w, shift, seed):
    """(a, b) where the content of a moves right by ``shift`` px in b."""
    base = make_texture(h, w + shift, seed)
    a = base[:, shift : shift + w]
    b = base[:, :w]
    return a, b


def block_match(a, b, block=16, radius=4, margin=8):
    """Exhaustive integer-displacement search, one vector per block.

    Returns rows (x, y, dx, dy) minimizing SSD between the block of ``a`` at
    (x, y) and the block of ``b`` displaced by (dx, dy).
    """
    h, w = a.shape
    out = []
    for by in range(margin, h - margin - block + 1, block):
        for bx in range(margin, w - margin - block + 1, block):
            ref = a[by : by + block, bx : bx + block]
            best = (np.inf, 0, 0)
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    cand = b[by + dy : by + dy + block, bx + dx : bx + dx + block]
                    ssd = float(((ref - cand) ** 2).sum())
                    if ssd < best[0]:
                        best = (ssd, dx, dy)
            out.append((bx, by, best[1], best[2]))
    return out


def rotation_pair(a, angle_deg):
    """Rotate the content of ``a`` about its center.

    Returns (b, u_true, v_true) such that sampling b at (x + u_true,
    y + v_true) recovers a (up to interpolation error).
    """
    from scipy import ndimage

    h, w = a.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    # b(p) = a(Rinv (p - c) + c)
    src_x = cx + np.cos(theta) * dx + np.sin(theta) * dy
    src_y = cy - np.sin(theta) * dx + np.cos(theta) * dy
    b = ndimage.map_coordinates(a, [src_y, src_x], order=1, mode="nearest")
    u_true = (np.cos(theta) * dx - np.sin(theta) * dy) - dx
    v_true = (np.sin(theta) * dx + np.cos(theta) * dy) - dy
    return b.astype(np.float32), u_true.astype(np.float32), v_true.astype(np.float32)


def angular_error_deg(u1, v1, u2, v2):
    """Angle between space-time direction vectors (u, v, 1), in degrees."""
    num = u1 * u2 + v1 * v2 + 1.0
    den = np.sqrt((u1**2 + v1**2 + 1.0) * (u2**2 + v2**2 + 1.0))
    return np.rad2deg(np.arccos(np.clip(num / den, -1.0, 1.0)))


def central_difference(f, x, coords, h=1e-3):
    """Numeric gradient of scalar f at the given flat coordinates of x."""
    x = np.asarray(x, dtype=np.float32)
    grads = np.zeros(len(coords), dtype=np.float64)
    flat = x.reshape(-1)
    for idx, coord in enumerate(coords):
        orig = flat[coord]
        flat[coord] = orig + h
        hi = f(x)
        flat[coord] = orig - h
        lo = f(x)
        flat[coord] = orig
        grads[idx] = (hi - lo) / (2.0 * h)
    return grads


def conv3d_same_f64(x, kernel, bias):
    """Stride-1 SAME conv for 3x3x3 kernels, all in float64."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    n, c, t, h, w = x.shape
    xp = np.pad(x, [(0, 0), (0, 0), (1, 1), (1, 1), (1, 1)])
    out = np.zeros((n, k.shape[0], t, h, w), dtype=np.float64)
    for dt in range(3):
        for dh in range(3):
            for dw in range(3):
                patch = xp[:, :, dt : dt + t, dh : dh + h, dw : dw + w]
                out += np.einsum("ncthw,kc->nkthw", patch, k[:, :, dt, dh, dw])
    return out + np.asarray(bias, dtype=np.float64)[None, :, None, None, None]


def batchnorm_f64(x, gamma, beta, eps=1e-5):
    axes = (0,) + tuple(range(2, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    var = x.var(axis=axes, keepdims=True)
    shape = (1, -1) + (1,) * (x.ndim - 2)
    xhat = (x - mean) / np.sqrt(var + eps)
    return xhat * np.asarray(gamma, np.float64).reshape(shape) + np.asarray(
        beta, np.float64
    ).reshape(shape)


def head_loss_f64(model, x, y, with_mask=False):
    """Float64 re-evaluation of a classifier head's training loss.

    Mirrors the head forward passes exactly (same eps, same pooling) and
    exists so finite differences are not drowned by float32 rounding of
    the loss value. With with_mask the relu sign pattern comes back too,
    letting callers reject finite-difference steps that straddle a kink
    (central differences are meaningless across one).
    """
    x = np.asarray(x, dtype=np.float64)
    mask = b""
    if model.kind == "slp":
        pooled = x.mean(axis=(2, 3, 4))
        z = pooled @ model.W.data.astype(np.float64).T + model.b.data.astype(np.float64)
    else:
        h = conv3d_same_f64(x, model.k1.data, model.b1.data)
        h = batchnorm_f64(h, model.g1.data, model.be1.data)
        mask += np.packbits(h > 0).tobytes()
        h = np.maximum(h, 0.0)
        h = conv3d_same_f64(h, model.k2.data, model.b2.data)
        h = batchnorm_f64(h, model.g2.data, model.be2.data)
        mask += np.packbits(h > 0).tobytes()
        h = np.maximum(h, 0.0)
        pooled = h.mean(axis=(2, 3, 4))
        z = pooled @ model.fc_w.data.astype(np.float64).T + model.fc_b.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    loss = float(-np.log(p[np.arange(len(y)), y]).mean())
    return (loss, mask) if with_mask else loss
