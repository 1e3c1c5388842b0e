"""Dense optical flow between consecutive frames.

Coarse-to-fine Horn-Schunck: a Gaussian image pyramid with warping, and the
classic iterative update with the 3x3 averaging kernel at each level. Good
enough for flat-shaded synthetic frames and multi-pixel displacements; no
external flow dependency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

AVG_KERNEL = np.array([[1 / 12, 1 / 6, 1 / 12],
                       [1 / 6, 0.0, 1 / 6],
                       [1 / 12, 1 / 6, 1 / 12]])


@dataclass(frozen=True)
class FramePair:
    """One frame and the dense flow toward the next frame."""

    frame: np.ndarray  # (H, W) uint8
    flow: np.ndarray   # (H, W, 2) float, pixels/frame

    def __post_init__(self):
        if self.frame.shape != self.flow.shape[:2]:
            raise ValueError("frame and flow dimensions differ")
        if not np.all(np.isfinite(self.flow)):
            raise ValueError("flow must be finite")


def _derivatives(a, b):
    kx = np.array([[-1, 1], [-1, 1]]) * 0.25
    ky = np.array([[-1, -1], [1, 1]]) * 0.25
    kt = np.ones((2, 2)) * 0.25
    fx = ndimage.convolve(a, kx) + ndimage.convolve(b, kx)
    fy = ndimage.convolve(a, ky) + ndimage.convolve(b, ky)
    # a - b: makes positive u mean content moving toward +x from a to b,
    # matching the warp convention used between pyramid levels
    ft = ndimage.convolve(a, kt) - ndimage.convolve(b, kt)
    return fx, fy, ft


def _hs_increment(a, b, alpha, iters):
    fx, fy, ft = _derivatives(a, b)
    u = np.zeros_like(a)
    v = np.zeros_like(a)
    denom_reg = alpha**2 + fx**2 + fy**2
    for _ in range(iters):
        ua = ndimage.convolve(u, AVG_KERNEL)
        va = ndimage.convolve(v, AVG_KERNEL)
        shared = (fx * ua + fy * va + ft) / denom_reg
        u = ua - fx * shared
        v = va - fy * shared
    return u, v


def _downsample(img):
    return ndimage.gaussian_filter(img, 1.0)[::2, ::2]


def _warp(img, u, v):
    h, w = img.shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    coords = np.stack([yy + v, xx + u])
    return ndimage.map_coordinates(img, coords, order=1, mode="nearest")


def compute_flow(frame_a: np.ndarray, frame_b: np.ndarray, alpha: float = 8.0,
                 iters: int = 60, levels: int = 3) -> np.ndarray:
    """(H, W, 2) flow in pixels/frame from frame_a to frame_b.

    Pyramidal with inter-level warping so shifts of a few pixels stay inside
    the linearization range of each level.
    """
    if frame_a.shape != frame_b.shape:
        raise ValueError(f"frame sizes differ: {frame_a.shape} vs {frame_b.shape}")
    a = np.asarray(frame_a, dtype=float) / 255.0
    b = np.asarray(frame_b, dtype=float) / 255.0

    pyr_a, pyr_b = [a], [b]
    for _ in range(levels - 1):
        if min(pyr_a[-1].shape) < 16:
            break
        pyr_a.append(_downsample(pyr_a[-1]))
        pyr_b.append(_downsample(pyr_b[-1]))

    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])
    for level in range(len(pyr_a) - 1, -1, -1):
        la, lb = pyr_a[level], pyr_b[level]
        if u.shape != la.shape:
            scale_y = la.shape[0] / u.shape[0]
            scale_x = la.shape[1] / u.shape[1]
            u = ndimage.zoom(u, (scale_y, scale_x), order=1) * scale_x
            v = ndimage.zoom(v, (scale_y, scale_x), order=1) * scale_y
        warped = _warp(lb, u, v)
        du, dv = _hs_increment(la, warped, alpha / 255.0, iters)
        u = u + du
        v = v + dv
    return np.stack([u, v], axis=-1)


def flow_to_image(flow: np.ndarray, max_flow: float = 8.0) -> np.ndarray:
    """Standard magnitude/angle color wheel, (H, W, 3) float in [0, 1].

    Angle maps to hue, magnitude (clipped at max_flow) to saturation;
    zero flow is the neutral white. max_flow is fixed so images from
    different frames stay comparable.
    """
    u, v = flow[:, :, 0], flow[:, :, 1]
    mag = np.hypot(u, v)
    ang = np.arctan2(v, u)  # [-pi, pi]
    h = (ang + np.pi) / (2 * np.pi)
    s = np.clip(mag / max_flow, 0.0, 1.0)
    val = np.ones_like(h)

    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = val * (1 - s)
    q = val * (1 - f * s)
    t = val * (1 - (1 - f) * s)
    r = np.choose(i, [val, q, p, p, t, val])
    g = np.choose(i, [t, val, val, q, p, p])
    b = np.choose(i, [p, p, t, val, val, q])
    return np.stack([r, g, b], axis=-1)
