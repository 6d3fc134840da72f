"""SSIM and PSNR reference implementations plus the evaluation harness.

The SSIM here is the single source of truth: the training loss calls the
same torch kernel, so loss and metric cannot drift apart.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn.functional as F

from .data import CorpusIndex, Variant, assemble_model_input, enumerate_eval_windows
from .errors import ParameterError
from .media_io import decode_animation

REPORT_FORMAT_VERSION = "sketchbetween-report-1"


@dataclass
class MetricConfig:
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    psnr_cap: float = 100.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ParameterError("K1 and K2 must be positive")
        if self.ssim_window < 1 or self.ssim_window % 2 == 0:
            raise ParameterError("ssim_window must be odd and positive")


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """2D Gaussian window normalized to sum 1."""
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _effective_window(cfg: MetricConfig, h: int, w: int) -> int:
    # Shrink to the largest odd window that fits small images.
    win = min(cfg.ssim_window, h, w)
    if win % 2 == 0:
        win -= 1
    if win < 1:
        raise ParameterError("image too small for SSIM")
    return win


def ssim_torch(x: torch.Tensor, y: torch.Tensor, cfg: MetricConfig) -> torch.Tensor:
    """Per-image SSIM for batched (B, C, H, W) tensors in [0,1].

    Gaussian-weighted statistics over every valid window position, averaged
    over positions then channels. Differentiable.
    """
    if x.shape != y.shape:
        raise ParameterError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    b, c, h, w = x.shape
    win = _effective_window(cfg, h, w)
    kernel = torch.as_tensor(
        gaussian_window(win, cfg.ssim_sigma), dtype=x.dtype, device=x.device
    ).expand(c, 1, win, win)

    def filt(t):
        return F.conv2d(t, kernel, groups=c)

    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x * mu_x
    var_y = filt(y * y) - mu_y * mu_y
    cov = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return (num / den).mean(dim=(1, 2, 3))


def ssim(a: np.ndarray, b: np.ndarray, cfg: MetricConfig | None = None) -> float:
    """SSIM between two (H, W, 3) frames in [0,1]."""
    cfg = cfg or MetricConfig()
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")
    ta = torch.from_numpy(np.ascontiguousarray(a, dtype=np.float64)).permute(2, 0, 1)[None]
    tb = torch.from_numpy(np.ascontiguousarray(b, dtype=np.float64)).permute(2, 0, 1)[None]
    with torch.no_grad():
        return float(ssim_torch(ta, tb, cfg)[0])


def psnr(a: np.ndarray, b: np.ndarray, cfg: MetricConfig | None = None) -> float:
    """Peak signal-to-noise ratio in dB; exact matches return the cap."""
    cfg = cfg or MetricConfig()
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return cfg.psnr_cap
    return min(cfg.psnr_cap, 10.0 * math.log10(cfg.dynamic_range**2 / mse))


@dataclass
class WindowRecord:
    source_id: str
    start: int
    frame_ssim: list[float]
    frame_psnr: list[float]


@dataclass
class EvalReport:
    variant: str
    records: list[WindowRecord] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)

    @property
    def num_windows(self) -> int:
        return len(self.records)

    @property
    def num_frames(self) -> int:
        return sum(len(r.frame_ssim) for r in self.records)

    @property
    def mean_ssim(self) -> float:
        vals = [v for r in self.records for v in r.frame_ssim]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def mean_psnr(self) -> float:
        vals = [v for r in self.records for v in r.frame_psnr]
        return float(np.mean(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "variant": self.variant,
            "num_windows": self.num_windows,
            "num_frames": self.num_frames,
            "mean_ssim": self.mean_ssim,
            "mean_psnr": self.mean_psnr,
            "windows": [asdict(r) for r in self.records],
            "errors": self.errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(
    model,
    corpus: CorpusIndex,
    variant: Variant | str = Variant.FULL,
    cfg: MetricConfig | None = None,
    split: str = "test",
) -> EvalReport:
    """Score the model over every overlapping window of the given split.

    Only the in-between frames 1..N-2 are scored; the first and last
    positions are never counted. Decode or model failures are recorded
    per clip without aborting the run.
    """
    cfg = cfg or MetricConfig()
    variant = Variant(variant)
    n = corpus.N
    report = EvalReport(variant=variant.value)
    model.eval()
    for entry in corpus.split(split):
        try:
            clip = decode_animation(entry.path)
            for window in enumerate_eval_windows(clip, n):
                inp, target = assemble_model_input(window, variant)
                x = torch.from_numpy(inp.stacked)[None]
                with torch.no_grad():
                    recon = model(x)[0][0].numpy()
                report.records.append(
                    WindowRecord(
                        source_id=window.source_id,
                        start=window.start,
                        frame_ssim=[
                            ssim(recon[i], target[i], cfg) for i in range(1, n - 1)
                        ],
                        frame_psnr=[
                            psnr(recon[i], target[i], cfg) for i in range(1, n - 1)
                        ],
                    )
                )
        except Exception as exc:  # keep going; the report carries the failure
            report.errors.append({"source_id": entry.source_id, "error": str(exc)})
    report.records.sort(key=lambda r: (r.source_id, r.start))
    return report
