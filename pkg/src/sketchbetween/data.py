"""Corpus indexing, window enumeration, and model-input assembly."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DecodeError, ParameterError
from .media_io import AnimationClip, decode_animation
from .sketchgen import synthesize_sketch

DEFAULT_N = 5


class Variant(str, enum.Enum):
    FULL = "full"
    NO_SKETCH = "no_sketch"
    NO_FINAL = "no_final"


@dataclass
class CorpusEntry:
    source_id: str
    path: Path
    frame_count: int
    split: str


@dataclass
class CorpusIndex:
    entries: list[CorpusEntry]
    num_excluded: dict[str, int]
    N: int
    root: Path

    def split(self, name: str) -> list[CorpusEntry]:
        return [e for e in self.entries if e.split == name]


@dataclass
class Window:
    source_id: str
    start: int
    frames: list[np.ndarray]


@dataclass
class ModelInput:
    stacked: np.ndarray  # (N, 128, 128, 3)
    variant: Variant


def _list_animations(split_dir: Path) -> list[Path]:
    paths = [p for p in split_dir.iterdir() if p.suffix.lower() == ".gif" or p.is_dir()]
    return sorted(paths, key=lambda p: p.name)


def scan_corpus(root: str | os.PathLike, N: int = DEFAULT_N) -> CorpusIndex:
    """Index every decodable clip under <root>/train and <root>/test,
    excluding clips shorter than N frames."""
    root = Path(root)
    for split in ("train", "test"):
        if not (root / split).is_dir():
            raise ConfigurationError(f"missing split directory: {root / split}")
    entries: list[CorpusEntry] = []
    num_excluded = {"train": 0, "test": 0}
    for split in ("train", "test"):
        for path in _list_animations(root / split):
            try:
                clip = decode_animation(path)
            except DecodeError:
                num_excluded[split] += 1
                continue
            if len(clip) < N:
                num_excluded[split] += 1
                continue
            entries.append(
                CorpusEntry(
                    source_id=clip.source_id,
                    path=path,
                    frame_count=len(clip),
                    split=split,
                )
            )
    return CorpusIndex(entries=entries, num_excluded=num_excluded, N=N, root=root)


def enumerate_eval_windows(clip: AnimationClip, N: int = DEFAULT_N) -> list[Window]:
    """All overlapping N-frame windows, one per start offset."""
    if len(clip) < N:
        raise ParameterError(f"clip {clip.source_id!r} has {len(clip)} < {N} frames")
    return [
        Window(source_id=clip.source_id, start=s, frames=clip.frames[s : s + N])
        for s in range(len(clip) - N + 1)
    ]


def sample_training_window(
    clip: AnimationClip, N: int, rng: np.random.Generator
) -> Window:
    """Uniform random N-frame window of consecutive frames."""
    if len(clip) < N:
        raise ParameterError(f"clip {clip.source_id!r} has {len(clip)} < {N} frames")
    start = int(rng.integers(0, len(clip) - N + 1))
    return Window(source_id=clip.source_id, start=start, frames=clip.frames[start : start + N])


def assemble_model_input(
    window: Window, variant: Variant | str = Variant.FULL
) -> tuple[ModelInput, np.ndarray]:
    """Build the model input stack for a window and return it with the
    unmodified ground-truth target frames.

    full: positions 0 and N-1 rendered, 1..N-2 sketches.
    no_sketch: positions 1..N-2 blank white.
    no_final: position N-1 is a sketch too; only position 0 rendered.
    """
    try:
        variant = Variant(variant)
    except ValueError:
        raise ParameterError(f"unknown variant: {variant!r}") from None
    n = len(window.frames)
    target = np.stack(window.frames).astype(np.float32)
    stacked = target.copy()
    if variant is Variant.FULL:
        for i in range(1, n - 1):
            stacked[i] = synthesize_sketch(window.frames[i])
    elif variant is Variant.NO_SKETCH:
        for i in range(1, n - 1):
            stacked[i] = 1.0
    else:  # NO_FINAL
        for i in range(1, n):
            stacked[i] = synthesize_sketch(window.frames[i])
    return ModelInput(stacked=stacked, variant=variant), target


def make_batches(items: list, batch_size: int, rng: np.random.Generator):
    """Yield shuffled batches; the final partial batch is kept."""
    if not items:
        raise ParameterError("empty input list")
    if batch_size < 1:
        raise ParameterError("batch_size must be >= 1")
    order = rng.permutation(len(items))
    for i in range(0, len(items), batch_size):
        yield [items[j] for j in order[i : i + batch_size]]
