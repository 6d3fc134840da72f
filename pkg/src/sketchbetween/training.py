"""Loss functions, lookahead-wrapped Adam, and the training loop."""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    CorpusIndex,
    Variant,
    assemble_model_input,
    make_batches,
    sample_training_window,
)
from .errors import ParameterError, TrainingDivergedError
from .media_io import AnimationClip, decode_animation, frame_to_u8
from .metrics import MetricConfig, ssim_torch
from .model import ModelConfig, VqVae, init_model
from .sketchgen import AugmentParams, augment


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.001
    batch_size: int = 16
    lookahead_k: int = 5
    lookahead_alpha: float = 0.5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-7
    commitment_beta: float = 0.25
    seed: int = 0
    augment: AugmentParams = field(default_factory=AugmentParams)

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if not 0.0 < self.lookahead_alpha <= 1.0:
            raise ParameterError("lookahead_alpha must be in (0, 1]")
        if self.lookahead_k < 1:
            raise ParameterError("lookahead_k must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("augment"), dict):
            d["augment"] = AugmentParams(**d["augment"])
        return cls(**d)


class Lookahead:
    """Lookahead wrapper: k fast (inner Adam) steps, then pull the slow
    weights toward the fast ones by alpha and reset the fast weights."""

    def __init__(self, params, lr, betas, eps, k=5, alpha=0.5):
        self.params = list(params)
        self.inner = torch.optim.Adam(self.params, lr=lr, betas=betas, eps=eps)
        self.k = k
        self.alpha = alpha
        self.k_counter = 0
        self.slow = [p.detach().clone() for p in self.params]

    def zero_grad(self):
        self.inner.zero_grad(set_to_none=True)

    def step(self):
        self.inner.step()
        self.k_counter += 1
        if self.k_counter >= self.k:
            with torch.no_grad():
                for slow, fast in zip(self.slow, self.params):
                    slow.add_(fast - slow, alpha=self.alpha)
                    fast.copy_(slow)
            self.k_counter = 0

    def export_tensors(self) -> tuple[dict[str, torch.Tensor], dict]:
        tensors: dict[str, torch.Tensor] = {}
        for i, slow in enumerate(self.slow):
            tensors[f"slow/{i}"] = slow
        for i, p in enumerate(self.params):
            st = self.inner.state.get(p)
            if st is None:
                continue
            tensors[f"adam/{i}/exp_avg"] = st["exp_avg"]
            tensors[f"adam/{i}/exp_avg_sq"] = st["exp_avg_sq"]
            tensors[f"adam/{i}/step"] = torch.as_tensor(st["step"], dtype=torch.float32)
        return tensors, {"k_counter": self.k_counter}

    def import_tensors(self, tensors: dict[str, torch.Tensor], meta: dict) -> None:
        self.k_counter = int(meta.get("k_counter", 0))
        for i in range(len(self.params)):
            if f"slow/{i}" in tensors:
                self.slow[i] = tensors[f"slow/{i}"].clone()
            key = f"adam/{i}/exp_avg"
            if key in tensors:
                self.inner.state[self.params[i]] = {
                    "step": tensors[f"adam/{i}/step"].clone(),
                    "exp_avg": tensors[key].clone(),
                    "exp_avg_sq": tensors[f"adam/{i}/exp_avg_sq"].clone(),
                }


def reconstruction_loss(
    pred: torch.Tensor, target: torch.Tensor, cfg: MetricConfig | None = None
) -> torch.Tensor:
    """1 - mean SSIM over every frame of the batch. Shapes (B, N, H, W, 3)."""
    if pred.shape != target.shape:
        raise ParameterError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    cfg = cfg or MetricConfig()
    b, n, h, w, c = pred.shape
    p = pred.reshape(b * n, h, w, c).permute(0, 3, 1, 2)
    t = target.reshape(b * n, h, w, c).permute(0, 3, 1, 2)
    return 1.0 - ssim_torch(p, t, cfg).mean()


def total_loss(reconstruction, codebook_loss, commitment_loss, beta):
    return reconstruction + codebook_loss + beta * commitment_loss


def train_step(
    model: VqVae,
    optimizer: Lookahead,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    commitment_beta: float,
    metric_cfg: MetricConfig | None = None,
    context: str = "",
) -> dict:
    """One optimizer update; returns the loss components for this batch."""
    optimizer.zero_grad()
    recon, codebook_loss, commitment_loss, indices = model(inputs)
    rec = reconstruction_loss(recon, targets, metric_cfg)
    loss = total_loss(rec, codebook_loss, commitment_loss, commitment_beta)
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss at step {int(model.step)} ({context})"
        )
    loss.backward()
    optimizer.step()
    with torch.no_grad():
        model.step += 1
    return {
        "loss": loss.item(),
        "reconstruction": rec.item(),
        "codebook": codebook_loss.item(),
        "commitment": commitment_loss.item(),
        "dead_codes": model.dead_code_count(indices),
    }


@dataclass
class EpochRecord:
    epoch: int
    reconstruction: float
    codebook: float
    commitment: float
    dead_codes: int
    wall_time: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epochs": [asdict(r) for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        return cls(records=[EpochRecord(**r) for r in d.get("epochs", [])])


def batch_tensors(pairs) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack (ModelInput, target) pairs into input/target tensors."""
    xs = torch.from_numpy(np.stack([p[0].stacked for p in pairs]))
    ys = torch.from_numpy(np.stack([p[1] for p in pairs]))
    return xs, ys


def _epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, stream]))


def _cached_clip(cache: dict, path) -> AnimationClip:
    # uint8 cache keeps memory bounded; re-expand to float on use.
    key = str(path)
    if key not in cache:
        clip = decode_animation(path)
        cache[key] = (
            [frame_to_u8(f) for f in clip.frames],
            clip.source_id,
            clip.fps,
        )
    frames_u8, source_id, fps = cache[key]
    return AnimationClip(
        frames=[f.astype(np.float32) / 255.0 for f in frames_u8],
        source_id=source_id,
        fps=fps,
    )


def _latest_checkpoint(out_dir: Path) -> tuple[int, Path] | None:
    best = None
    for p in out_dir.glob("ckpt_epoch_*.zip"):
        m = re.fullmatch(r"ckpt_epoch_(\d+)\.zip", p.name)
        if m:
            e = int(m.group(1))
            if best is None or e > best[0]:
                best = (e, p)
    return best


def train(
    corpus: CorpusIndex,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    variant: Variant | str = Variant.FULL,
    out_dir: str | Path = "runs/train",
    resume: bool = True,
    log=None,
) -> tuple[VqVae, TrainHistory]:
    """Full training loop: one random window per usable train clip per epoch,
    augmentation before sketch synthesis, per-epoch checkpoints to out_dir.

    Resumable: with the same seeds, a run killed between epochs and resumed
    reaches the same weights as an uninterrupted one.
    """
    variant = Variant(variant)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = corpus.split("train")
    if not entries:
        raise ParameterError("train split is empty")

    torch.manual_seed(train_cfg.seed)
    history = TrainHistory()
    start_epoch = 0
    optimizer = None
    model = init_model(model_cfg)

    latest = _latest_checkpoint(out_dir) if resume else None
    if latest is not None:
        start_epoch, ckpt_path = latest
        model, extras, meta = load_checkpoint(ckpt_path, with_extras=True)
        optimizer = _make_optimizer(model, train_cfg)
        optimizer.import_tensors(extras, meta)
        hist_path = out_dir / "history.json"
        if hist_path.is_file():
            history = TrainHistory.from_dict(json.loads(hist_path.read_text()))
            history.records = history.records[:start_epoch]
    if optimizer is None:
        optimizer = _make_optimizer(model, train_cfg)

    cache: dict = {}
    for epoch in range(start_epoch, train_cfg.epochs):
        t0 = time.time()
        model.train()
        pairs = []
        for i, entry in enumerate(entries):
            rng = _epoch_rng(train_cfg.seed, epoch, i)
            clip = _cached_clip(cache, entry.path)
            clip = augment(clip, train_cfg.augment, rng)
            window = sample_training_window(clip, corpus.N, rng)
            inp, target = assemble_model_input(window, variant)
            pairs.append((inp, target, entry.source_id))
        batch_rng = _epoch_rng(train_cfg.seed, epoch, len(entries))
        sums = {"reconstruction": 0.0, "codebook": 0.0, "commitment": 0.0}
        dead = 0
        nbatches = 0
        for batch in make_batches(pairs, train_cfg.batch_size, batch_rng):
            xs, ys = batch_tensors(batch)
            stats = train_step(
                model,
                optimizer,
                xs,
                ys,
                train_cfg.commitment_beta,
                context=f"epoch {epoch}, clips {[p[2] for p in batch]}",
            )
            for k in sums:
                sums[k] += stats[k]
            dead = stats["dead_codes"]
            nbatches += 1
        record = EpochRecord(
            epoch=epoch,
            reconstruction=sums["reconstruction"] / nbatches,
            codebook=sums["codebook"] / nbatches,
            commitment=sums["commitment"] / nbatches,
            dead_codes=dead,
            wall_time=time.time() - t0,
        )
        history.records.append(record)
        if log:
            log(record)
        extras, meta = optimizer.export_tensors()
        save_checkpoint(model, out_dir / f"ckpt_epoch_{epoch + 1}.zip", extras, meta)
        (out_dir / "history.json").write_text(json.dumps(history.to_dict(), indent=2))
    return model, history


def _make_optimizer(model: VqVae, cfg: TrainConfig) -> Lookahead:
    return Lookahead(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
        k=cfg.lookahead_k,
        alpha=cfg.lookahead_alpha,
    )
