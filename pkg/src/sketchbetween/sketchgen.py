"""Synthetic sketch generation and training-time augmentation.

Sketches are built by averaging binary Canny edge maps at four blur scales
and inverting, giving dark strokes on a white ground.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage


def _pad_reflect101(img: np.ndarray, r: int, axis: int) -> np.ndarray:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    return np.pad(img, pad, mode="reflect")


def _symmetric_filter(img: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    """Correlate with a symmetric kernel, summing the +d and -d taps pairwise
    so the result mirrors bit-exactly when the input mirrors."""
    r = len(weights) - 1
    p = _pad_reflect101(img, r, axis)
    sl = [slice(None), slice(None)]
    sl[axis] = slice(r, p.shape[axis] - r)
    out = weights[0] * p[tuple(sl)]
    for d in range(1, r + 1):
        lo, hi = list(sl), list(sl)
        lo[axis] = slice(r - d, p.shape[axis] - r - d)
        hi[axis] = slice(r + d, p.shape[axis] - r + d)
        out = out + weights[d] * (p[tuple(lo)] + p[tuple(hi)])
    return out


def _central_diff(img: np.ndarray, axis: int) -> np.ndarray:
    """x[i+1] - x[i-1]; exactly antisymmetric under mirroring."""
    p = _pad_reflect101(img, 1, axis)
    sl = [slice(None), slice(None)]
    hi, lo = list(sl), list(sl)
    hi[axis] = slice(2, p.shape[axis])
    lo[axis] = slice(0, p.shape[axis] - 2)
    return p[tuple(hi)] - p[tuple(lo)]


def _gaussian_weights(kernel_size: int, sigma: float) -> np.ndarray:
    r = (kernel_size - 1) // 2
    g = np.exp(-np.arange(r + 1, dtype=np.float64) ** 2 / (2.0 * sigma**2))
    return g / (g[0] + 2.0 * g[1:].sum())

from .errors import ParameterError
from .media_io import AnimationClip

VALID_KERNELS = (3, 5, 7, 9)
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)
DEFAULT_LOW_THRESHOLD = 50.0
DEFAULT_HIGH_THRESHOLD = 150.0


@dataclass
class AugmentParams:
    p_hue: float = 0.5
    max_hue_shift: float = 180.0
    p_sat: float = 0.5
    max_sat_delta: float = 0.2
    p_flip: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for p in (self.p_hue, self.p_sat, self.p_flip):
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"probability {p} outside [0,1]")
        if not 0.0 <= self.max_hue_shift < 360.0:
            raise ParameterError("max_hue_shift must be in [0,360)")
        if not 0.0 <= self.max_sat_delta <= 1.0:
            raise ParameterError("max_sat_delta must be in [0,1]")


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels whose magnitude is >= both neighbors along the gradient
    direction (quantized to 4 sectors). The tie rule and sector boundaries
    are chosen so the result mirrors exactly when the input mirrors."""
    ax, ay = np.abs(gx), np.abs(gy)
    t_lo, t_hi = np.tan(np.pi / 8), np.tan(3 * np.pi / 8)
    horizontal = ay <= t_lo * ax
    vertical = ay >= t_hi * ax
    diag_main = ~horizontal & ~vertical & (gx * gy > 0)  # 45 deg: \ direction
    diag_anti = ~horizontal & ~vertical & (gx * gy <= 0)  # 135 deg: / direction

    p = np.pad(mag, 1, mode="constant")
    c = p[1:-1, 1:-1]
    left, right = p[1:-1, :-2], p[1:-1, 2:]
    up, down = p[:-2, 1:-1], p[2:, 1:-1]
    ul, dr = p[:-2, :-2], p[2:, 2:]
    ur, dl = p[:-2, 2:], p[2:, :-2]
    keep = (
        (horizontal & (c >= left) & (c >= right))
        | (vertical & (c >= up) & (c >= down))
        | (diag_main & (c >= ul) & (c >= dr))
        | (diag_anti & (c >= ur) & (c >= dl))
    )
    return keep


def canny_edges(
    frame: np.ndarray,
    kernel_size: int,
    low: float = DEFAULT_LOW_THRESHOLD,
    high: float = DEFAULT_HIGH_THRESHOLD,
) -> np.ndarray:
    """Binary Canny edge map at one blur scale.

    kernel_size sets the Gaussian pre-blur aperture with sigma
    0.3*((k-1)/2 - 1) + 0.8; the Sobel gradient aperture stays at 3 and the
    hysteresis thresholds apply to the L2 gradient magnitude on the 8-bit
    scale. Deterministic, and commutes exactly with horizontal mirroring
    away from the one-pixel border.
    """
    if kernel_size not in VALID_KERNELS:
        raise ParameterError(
            f"kernel_size must be one of {VALID_KERNELS}, got {kernel_size}"
        )
    gray = (frame.astype(np.float64) @ LUMA_WEIGHTS.astype(np.float64)) * 255.0
    sigma = 0.3 * ((kernel_size - 1) / 2 - 1) + 0.8
    g = _gaussian_weights(kernel_size, sigma)
    blurred = _symmetric_filter(_symmetric_filter(gray, g, axis=0), g, axis=1)
    smooth = np.array([2.0, 1.0])  # Sobel's [1, 2, 1] tap, center first
    gx = _symmetric_filter(_central_diff(blurred, axis=1), smooth, axis=0)
    gy = _symmetric_filter(_central_diff(blurred, axis=0), smooth, axis=1)
    mag = np.hypot(gx, gy)
    ridge = _nonmax_suppress(mag, gx, gy)
    strong = ridge & (mag >= high)
    weak = ridge & (mag >= low)
    # hysteresis: keep weak pixels 8-connected to a strong one
    labels, num = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if num == 0:
        return np.zeros(frame.shape[:2], dtype=np.float32)
    strong_labels = np.unique(labels[strong])
    strong_labels = strong_labels[strong_labels > 0]
    edges = np.isin(labels, strong_labels) & weak
    return edges.astype(np.float32)


def synthesize_sketch(
    frame: np.ndarray,
    kernels: tuple[int, ...] = VALID_KERNELS,
    low: float = DEFAULT_LOW_THRESHOLD,
    high: float = DEFAULT_HIGH_THRESHOLD,
) -> np.ndarray:
    """Average the edge maps over all blur scales and invert to dark-on-white.

    Returned frame has three identical channels.
    """
    maps = [canny_edges(frame, k, low, high) for k in kernels]
    sketch = 1.0 - np.mean(maps, axis=0)
    return np.repeat(sketch[..., None], 3, axis=2).astype(np.float32)


def hue_shift(frame: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate hue by the given angle; gray pixels (zero saturation) are unchanged."""
    hsv = cv2.cvtColor(frame, cv2.COLOR_RGB2HSV)
    hsv[..., 0] = np.mod(hsv[..., 0] + degrees, 360.0)
    out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(out, 0.0, 1.0)


def saturation_scale(frame: np.ndarray, scale: float) -> np.ndarray:
    hsv = cv2.cvtColor(frame, cv2.COLOR_RGB2HSV)
    hsv[..., 1] = np.clip(hsv[..., 1] * scale, 0.0, 1.0)
    out = cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB)
    return np.clip(out, 0.0, 1.0)


def hflip(frame: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(frame[:, ::-1, :])


def augment(
    clip: AnimationClip, params: AugmentParams, rng: np.random.Generator
) -> AnimationClip:
    """Apply hue shift, saturation scaling, and horizontal flip, each with its
    own probability. One draw per clip: every frame gets the same transform,
    keeping the clip temporally coherent.
    """
    frames = list(clip.frames)
    if rng.random() < params.p_hue:
        angle = rng.uniform(-params.max_hue_shift, params.max_hue_shift)
        frames = [hue_shift(f, angle) for f in frames]
    if rng.random() < params.p_sat:
        scale = rng.uniform(1.0 - params.max_sat_delta, 1.0 + params.max_sat_delta)
        frames = [saturation_scale(f, scale) for f in frames]
    if rng.random() < params.p_flip:
        frames = [hflip(f) for f in frames]
    return AnimationClip(frames=frames, source_id=clip.source_id, fps=clip.fps)
