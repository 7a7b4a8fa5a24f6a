"""Duality-based TV-L1 optical flow.

Coarse-to-fine estimation: at each pyramid level the data term is
re-linearized around the current flow (a warp), and each warp runs a
fixed-point loop alternating a closed-form thresholding step on the
auxiliary field with a dual ascent step on the total-variation term.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, NumericError
from . import image

__all__ = ["FlowParams", "FlowField", "tvl1_flow"]

log = logging.getLogger(__name__)

GRAD_FLOOR = 1e-8


@dataclass(frozen=True)
class FlowParams:
    """Solver parameters. The defaults are conventional for this scheme."""

    lambda_: float = 0.15
    theta: float = 0.3
    tau: float = 0.125
    scale_factor: float = 0.5
    n_scales: int = 5
    n_warps: int = 5
    n_iters: int = 30
    stop_eps: float = 0.01
    median_filter: bool = True

    def __post_init__(self):
        if self.tau > 0.125 or self.tau <= 0:
            raise ConfigError(f"tau must be in (0, 0.125], got {self.tau}")
        if not 0.0 < self.scale_factor < 1.0:
            raise ConfigError(f"scale_factor must be in (0,1), got {self.scale_factor}")
        for name in ("n_scales", "n_warps", "n_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.lambda_ <= 0 or self.theta <= 0:
            raise ConfigError("lambda and theta must be positive")
        if self.stop_eps < 0:
            raise ConfigError(f"stop_eps must be >= 0, got {self.stop_eps}")


@dataclass
class FlowField:
    """Per-pixel displacement in pixels; u horizontal, v vertical."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float32)
        self.v = np.ascontiguousarray(self.v, dtype=np.float32)
        if self.u.ndim != 2 or self.u.shape != self.v.shape:
            raise DimensionError(
                f"u and v must be matching 2-d arrays, got {self.u.shape} and {self.v.shape}"
            )
        if not (np.isfinite(self.u).all() and np.isfinite(self.v).all()):
            raise NumericError("flow field contains non-finite values")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]


def _energy(i0, i1w, u, v, lambda_):
    ux, uy = image.forward_diff(u)
    vx, vy = image.forward_diff(v)
    tv = np.sqrt(ux.astype(np.float64) ** 2 + uy.astype(np.float64) ** 2).sum()
    tv += np.sqrt(vx.astype(np.float64) ** 2 + vy.astype(np.float64) ** 2).sum()
    data = np.abs(i1w.astype(np.float64) - i0.astype(np.float64)).sum()
    return float(tv + lambda_ * data)


def _solve_level(i0, i1, u, v, params, level, trace):
    lt = params.lambda_ * params.theta
    taut = params.tau / params.theta
    i1x, i1y = image.central_gradient(i1)
    p11 = np.zeros_like(u)
    p12 = np.zeros_like(u)
    p21 = np.zeros_like(u)
    p22 = np.zeros_like(u)
    energy = _energy(i0, image.warp_image(i1, u, v), u, v, params.lambda_)
    for w in range(params.n_warps):
        if trace is not None:
            trace.append((level, w, energy))
        u_kept, v_kept = u.copy(), v.copy()

        i1w = image.warp_image(i1, u, v)
        i1wx = image.warp_image(i1x, u, v)
        i1wy = image.warp_image(i1y, u, v)
        grad = i1wx * i1wx + i1wy * i1wy
        # Constant part of the linearized residual rho(u,v).
        rho_c = i1w - i1wx * u - i1wy * v - i0

        degenerate = grad < GRAD_FLOOR
        safe_grad = np.where(degenerate, 1.0, grad)
        for i in range(params.n_iters):
            rho = rho_c + i1wx * u + i1wy * v
            # Closed-form minimizer of the pointwise L1 data term.
            step = np.where(
                rho < -lt * grad,
                lt,
                np.where(rho > lt * grad, -lt, -rho / safe_grad),
            )
            step = np.where(degenerate, 0.0, step)
            v1 = u + step * i1wx
            v2 = v + step * i1wy

            u_new = v1 + params.theta * image.divergence(p11, p12)
            v_new = v2 + params.theta * image.divergence(p21, p22)
            if not (np.isfinite(u_new).all() and np.isfinite(v_new).all()):
                raise NumericError(
                    f"non-finite flow at level {level}, warp {w}, iteration {i}"
                )
            change = float(np.sqrt((u_new - u) ** 2 + (v_new - v) ** 2).mean())
            u, v = u_new, v_new

            ux, uy = image.forward_diff(u)
            vx, vy = image.forward_diff(v)
            norm_u = 1.0 + taut * np.sqrt(ux * ux + uy * uy)
            norm_v = 1.0 + taut * np.sqrt(vx * vx + vy * vy)
            p11 = (p11 + taut * ux) / norm_u
            p12 = (p12 + taut * uy) / norm_u
            p21 = (p21 + taut * vx) / norm_v
            p22 = (p22 + taut * vy) / norm_v

            if change < params.stop_eps:
                break
        if params.median_filter:
            u = image.median_cross(u)
            v = image.median_cross(v)

        # Descent safeguard: the fixed-point iterates converge well but do
        # not monotonically decrease the energy, so a warp whose result
        # raises it is discarded and the level stops at the best state.
        new_energy = _energy(i0, image.warp_image(i1, u, v), u, v, params.lambda_)
        if new_energy > energy * (1.0 + 1e-6) + 1e-12:
            log.debug(
                "level %d warp %d would raise energy %.6g -> %.6g; keeping previous flow",
                level, w, energy, new_energy,
            )
            u, v = u_kept, v_kept
            break
        energy = new_energy
    return u, v


def tvl1_flow(a: np.ndarray, b: np.ndarray, params: FlowParams = None, trace=None) -> FlowField:
    """Dense flow from frame ``a`` to frame ``b``.

    Parameters
    ----------
    a, b : 2-d float arrays of the same shape, intensities in [0, 1].
    params : FlowParams, optional
    trace : list, optional
        When given, receives one (level, warp, energy) tuple per warp, the
        energy being measured before the warp's iterations run.

    Returns
    -------
    FlowField
    """
    if params is None:
        params = FlowParams()
    a = np.ascontiguousarray(a, dtype=np.float32)
    b = np.ascontiguousarray(b, dtype=np.float32)
    if a.shape != b.shape:
        raise DimensionError(f"frame sizes differ: {a.shape} vs {b.shape}")
    # The conventional lambda/theta balance assumes 8-bit intensity units;
    # frames arrive in [0,1], so the solver works on a x255 copy.
    pyr_a = image.build_pyramid(a * 255.0, params.n_scales, params.scale_factor)
    pyr_b = image.build_pyramid(b * 255.0, params.n_scales, params.scale_factor)

    coarsest = len(pyr_a) - 1
    u = np.zeros_like(pyr_a[coarsest])
    v = np.zeros_like(pyr_a[coarsest])
    for level in range(coarsest, -1, -1):
        u, v = _solve_level(pyr_a[level], pyr_b[level], u, v, params, level, trace)
        if level > 0:
            lh, lw = pyr_a[level - 1].shape
            inv = 1.0 / params.scale_factor
            u = image.resize_bilinear(u, lh, lw) * inv
            v = image.resize_bilinear(v, lh, lw) * inv
    return FlowField(u, v)
