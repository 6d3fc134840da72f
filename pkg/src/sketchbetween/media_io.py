"""Animation file I/O and frame canonicalization.

Frames are numpy float32 arrays of shape (H, W, 3), RGB, values in [0, 1].
The canonical size is 128x128. Files are 8-bit at the boundary; everything
in memory stays real-valued.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, EmptyClipError

CANONICAL_SIZE = 128


@dataclass
class AnimationClip:
    """An ordered sequence of same-sized frames."""

    frames: list[np.ndarray]
    source_id: str
    fps: float = 10.0

    def __post_init__(self):
        if not self.frames:
            raise EmptyClipError(f"clip {self.source_id!r} has no frames")
        shapes = {f.shape for f in self.frames}
        if len(shapes) != 1:
            raise DecodeError(f"clip {self.source_id!r} mixes frame shapes: {shapes}")

    def __len__(self) -> int:
        return len(self.frames)


def to_unit_rgb(img: Image.Image) -> np.ndarray:
    """Composite a PIL image over opaque white and return float32 RGB in [0,1]."""
    rgba = img.convert("RGBA")
    arr = np.asarray(rgba, dtype=np.float32) / 255.0
    alpha = arr[..., 3:4]
    rgb = arr[..., :3] * alpha + (1.0 - alpha)
    return rgb.astype(np.float32)


def resize_to_canonical(frame: np.ndarray) -> np.ndarray:
    """Pad non-square frames with white to square, then bilinearly resample to 128x128.

    Canonical inputs are returned unchanged.
    """
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DecodeError(f"expected HxWx3 frame, got shape {frame.shape}")
    h, w = frame.shape[:2]
    if h == 0 or w == 0:
        raise DecodeError("zero-area frame")
    if h == CANONICAL_SIZE and w == CANONICAL_SIZE:
        return frame
    if h != w:
        side = max(h, w)
        padded = np.ones((side, side, 3), dtype=np.float32)
        top = (side - h) // 2
        left = (side - w) // 2
        padded[top : top + h, left : left + w] = frame
        frame = padded
    out = cv2.resize(
        frame, (CANONICAL_SIZE, CANONICAL_SIZE), interpolation=cv2.INTER_LINEAR
    )
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def _decode_gif(path: Path, source_id: str) -> AnimationClip:
    try:
        img = Image.open(path)
    except (OSError, UnidentifiedImageError) as exc:
        raise DecodeError(f"cannot open {path}: {exc}") from exc
    frames = []
    fps = 10.0
    try:
        duration = img.info.get("duration")
        if duration:
            fps = 1000.0 / float(duration)
        while True:
            frames.append(resize_to_canonical(to_unit_rgb(img)))
            try:
                img.seek(img.tell() + 1)
            except EOFError:
                break
    finally:
        img.close()
    if not frames:
        raise EmptyClipError(f"{path} decoded to zero frames")
    return AnimationClip(frames=frames, source_id=source_id, fps=fps)


def _decode_frame_dir(path: Path, source_id: str) -> AnimationClip:
    pngs = sorted(path.glob("*.png"))
    if not pngs:
        raise EmptyClipError(f"{path} contains no PNG frames")
    frames = []
    for p in pngs:
        try:
            with Image.open(p) as img:
                frames.append(resize_to_canonical(to_unit_rgb(img)))
        except (OSError, UnidentifiedImageError) as exc:
            raise DecodeError(f"cannot open {p}: {exc}") from exc
    return AnimationClip(frames=frames, source_id=source_id)


def decode_animation(path: str | os.PathLike) -> AnimationClip:
    """Decode a GIF file or a directory of numbered PNG frames.

    Frames are composited over white, normalized to [0,1], and resized to
    the canonical 128x128. Deterministic: repeated decodes are bit-identical.
    """
    p = Path(path)
    source_id = p.stem if p.is_file() else p.name
    if p.is_dir():
        return _decode_frame_dir(p, source_id)
    if not p.is_file():
        raise DecodeError(f"no such animation: {p}")
    return _decode_gif(p, source_id)


def frame_to_u8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)


def encode_animation(clip: AnimationClip, path: str | os.PathLike, fps: float = 10.0) -> None:
    """Write a GIF plus a sibling directory of per-frame PNGs.

    The PNG directory round-trips through decode_animation with per-channel
    error at most 1/255 (GIF output is palettized and only a preview).
    """
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    images = [Image.fromarray(frame_to_u8(f)) for f in clip.frames]
    duration = max(1, int(round(1000.0 / fps)))
    images[0].save(
        p,
        save_all=True,
        append_images=images[1:],
        duration=duration,
        loop=0,
        disposal=2,
    )
    frame_dir = p.with_name(p.stem + "_frames")
    frame_dir.mkdir(exist_ok=True)
    for i, img in enumerate(images):
        img.save(frame_dir / f"frame_{i:04d}.png")
