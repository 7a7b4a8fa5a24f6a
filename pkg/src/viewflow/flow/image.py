"""Grayscale image primitives shared by the flow solver and the extractor.

Frames are 2-d float32 arrays with intensities in [0, 1].
"""

import numpy as np
from scipy import ndimage

from ..errors import DimensionError, InputError

__all__ = [
    "to_gray",
    "bilinear_sample",
    "resize_bilinear",
    "gaussian_smooth",
    "central_gradient",
    "warp_image",
    "build_pyramid",
    "forward_diff",
    "divergence",
    "median_cross",
]

MIN_FRAME = 16

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def to_gray(frame) -> np.ndarray:
    """Convert an image array to a float32 grayscale frame in [0, 1].

    Accepts [H,W] or [H,W,3]; 8-bit input is scaled by 1/255, RGB is mixed
    with the 601 luma weights.
    """
    arr = np.asarray(frame)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    else:
        arr = arr.astype(np.float32)
    if arr.ndim == 3:
        if arr.shape[2] != 3:
            raise DimensionError(f"expected 3 color channels, got shape {arr.shape}")
        arr = arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114
    elif arr.ndim != 2:
        raise DimensionError(f"expected [H,W] or [H,W,3], got shape {arr.shape}")
    return np.clip(arr, 0.0, 1.0).astype(np.float32)


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at float coordinates, clamping samples to the border."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0).astype(np.float32)
    fy = (ys - y0).astype(np.float32)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return (top * (1.0 - fy) + bot * fy).astype(np.float32)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample to (out_h, out_w) with corner-aligned bilinear interpolation."""
    h, w = img.shape
    if (out_h, out_w) == (h, w):
        return img.astype(np.float32, copy=True)
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs.astype(np.float32), ys.astype(np.float32))
    return bilinear_sample(img, gx, gy)


def gaussian_smooth(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img.astype(np.float32, copy=True)
    return ndimage.gaussian_filter(img, sigma, mode="nearest").astype(np.float32)


def central_gradient(img: np.ndarray):
    """(d/dx, d/dy) by central differences over a replicated border."""
    p = np.pad(img, 1, mode="edge").astype(np.float32)
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5
    return gx, gy


def warp_image(frame: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear sample of frame at (x + u, y + v)."""
    if frame.shape != u.shape or frame.shape != v.shape:
        raise DimensionError(
            f"flow dims {u.shape} do not match frame dims {frame.shape}"
        )
    h, w = frame.shape
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    return bilinear_sample(frame, gx + u, gy + v)


def pyramid_sigma(scale_factor: float) -> float:
    # Anti-alias strength tied to the downsampling ratio.
    return 0.6 * float(np.sqrt(1.0 / scale_factor**2 - 1.0))


def pyramid_dims(height: int, width: int, n_scales: int, scale_factor: float):
    """Level dims, truncated so the coarsest level stays at least 16x16."""
    dims = [(height, width)]
    for k in range(1, n_scales):
        h = int(round(height * scale_factor**k))
        w = int(round(width * scale_factor**k))
        if h < MIN_FRAME or w < MIN_FRAME:
            break
        dims.append((h, w))
    return dims


def build_pyramid(frame: np.ndarray, n_scales: int, scale_factor: float):
    """Coarse-to-fine stack; level 0 is the input frame itself."""
    h, w = frame.shape
    if h < MIN_FRAME or w < MIN_FRAME:
        raise InputError(f"frame {h}x{w} is smaller than {MIN_FRAME}x{MIN_FRAME}")
    dims = pyramid_dims(h, w, n_scales, scale_factor)
    sigma = pyramid_sigma(scale_factor)
    levels = [frame.astype(np.float32)]
    for lh, lw in dims[1:]:
        smoothed = gaussian_smooth(levels[-1], sigma)
        levels.append(resize_bilinear(smoothed, lh, lw))
    return levels


def forward_diff(field: np.ndarray):
    """Forward differences with a zero Neumann boundary on the far edge."""
    dx = np.zeros_like(field)
    dy = np.zeros_like(field)
    dx[:, :-1] = field[:, 1:] - field[:, :-1]
    dy[:-1, :] = field[1:, :] - field[:-1, :]
    return dx, dy


def divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Adjoint of forward_diff (backward differences)."""
    div = np.zeros_like(px)
    div[:, 0] += px[:, 0]
    div[:, 1:] += px[:, 1:] - px[:, :-1]
    div[0, :] += py[0, :]
    div[1:, :] += py[1:, :] - py[:-1, :]
    return div


def median_cross(field: np.ndarray) -> np.ndarray:
    """Median over the 5-point cross neighborhood, borders replicated."""
    return ndimage.median_filter(field, footprint=_CROSS, mode="nearest")
