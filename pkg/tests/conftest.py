import numpy as np
import pytest

from sketchbetween.media_io import AnimationClip, encode_animation
from sketchbetween.model import ModelConfig


def sprite_frame(t: float, size: int = 128, color=(0.85, 0.25, 0.2)) -> np.ndarray:
    """A cartoon-ish frame: colored disk with a darker limb, on white, at a
    position parameterized by t in [0,1]."""
    frame = np.ones((size, size, 3), dtype=np.float32)
    yy, xx = np.mgrid[0:size, 0:size]
    cx = size * (0.25 + 0.5 * t)
    cy = size * (0.5 + 0.1 * np.sin(2 * np.pi * t))
    r = size * 0.18
    body = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    frame[body] = color
    # swinging rectangular "limb"
    lx = cx + r * np.cos(2 * np.pi * t)
    limb = (np.abs(xx - lx) <= size * 0.04) & (yy >= cy) & (yy <= cy + r * 1.8)
    frame[limb] = (0.15, 0.2, 0.55)
    return frame


def make_clip(num_frames: int, size: int = 128, source_id: str = "clip", phase: float = 0.0, color=(0.85, 0.25, 0.2)) -> AnimationClip:
    frames = [
        sprite_frame((i / max(num_frames, 1) + phase) % 1.0, size, color)
        for i in range(num_frames)
    ]
    return AnimationClip(frames=frames, source_id=source_id)


def make_corpus(root, train_specs, test_specs):
    """Write GIF clips under root/train and root/test.

    Each spec is (name, num_frames); colors and phases vary per clip.
    """
    rng = np.random.default_rng(7)
    for split, specs in (("train", train_specs), ("test", test_specs)):
        (root / split).mkdir(parents=True, exist_ok=True)
        for name, frames in specs:
            color = tuple(0.2 + 0.6 * rng.random(3))
            clip = make_clip(frames, source_id=name, phase=rng.random(), color=color)
            encode_animation(clip, root / split / f"{name}.gif")
            # encode_animation leaves a sibling PNG dir; keep splits GIF-only
            import shutil

            shutil.rmtree(root / split / f"{name}_frames")


def tiny_model_config(n: int = 3, seed: int = 0) -> ModelConfig:
    """A small but structurally faithful config for fast tests."""
    return ModelConfig(
        N=n,
        D=4,
        C=16,
        encoder_filters=[8, 8, 8, 8, 4],
        decoder_filters=[8, 8, 8, 3],
        seed=seed,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
