"""Acceptance gate: one test per criterion, each printing a PASS line.

Criteria 6 and 7 need hours of compute (and criterion 7 the real MGIF
corpus), so they are opt-in:
  SKETCHBETWEEN_LONG_TESTS=1  enables the scaled ablation-direction run.
  SKETCHBETWEEN_MGIF_DIR=...  enables the full-reproduction run on MGIF.
"""

import json
import os

import numpy as np
import pytest
import torch

from conftest import make_clip, make_corpus, sprite_frame
from sketchbetween.cli import main
from sketchbetween.data import (
    Variant,
    assemble_model_input,
    enumerate_eval_windows,
    make_batches,
    scan_corpus,
)
from sketchbetween.metrics import MetricConfig, evaluate, psnr, ssim
from sketchbetween.model import ModelConfig, init_model, quantize
from sketchbetween.sketchgen import canny_edges, hflip, synthesize_sketch
from sketchbetween.training import (
    Lookahead,
    TrainConfig,
    batch_tensors,
    reconstruction_loss,
    train,
    train_step,
)
from test_metrics import brute_force_ssim
from test_model import brute_force_indices


def _report(num: int, name: str) -> None:
    print(f"ACCEPTANCE {num} ({name}): PASS", flush=True)


def test_criterion_1_metric_oracles():
    rng = np.random.default_rng(2024)
    cfg = MetricConfig()
    for _ in range(50):
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        assert abs(ssim(a, b, cfg) - brute_force_ssim(a, b, cfg)) < 1e-6
        mse = float(np.mean((a - b) ** 2))
        assert abs(psnr(a, b, cfg) - 10.0 * np.log10(1.0 / mse)) < 1e-9
    _report(1, "metric oracles")


def test_criterion_2_quantizer_exactness():
    rng = np.random.default_rng(7)
    codebook = rng.normal(size=(16, 8))
    # duplicated rows force exact ties that must resolve to the lowest index
    codebook[9] = codebook[4]
    vectors = rng.normal(size=(1000, 8))
    vectors[::50] = codebook[4]  # sites tied between rows 4 and 9
    _, idx, _, _ = quantize(
        torch.from_numpy(vectors), torch.from_numpy(codebook)
    )
    want = brute_force_indices(vectors, codebook)
    assert np.array_equal(idx.numpy(), want)
    assert np.all(want[::50] == 4)
    _report(2, "quantizer correctness")


def test_criterion_3_shapes_and_gradients():
    model = init_model(ModelConfig())
    x = torch.rand(1, 5, 128, 128, 3)
    z = model.encode(x)
    assert z.shape == (1, 5, 32, 32, 8)
    q, _, _, _ = quantize(z, model.codebook)
    assert model.decode(q).shape == (1, 5, 128, 128, 3)

    # straight-through equality on a toy latent
    torch.manual_seed(0)
    codebook = torch.randn(4, 8)
    toy = torch.randn(1, 1, 1, 8, requires_grad=True)
    quantized, _, _, _ = quantize(toy, codebook)
    mix = torch.randn(8)
    (quantized * mix).sum().backward()
    post = quantized.detach().requires_grad_()
    (post * mix).sum().backward()
    assert torch.equal(toy.grad, post.grad)

    # reconstruction-loss autodiff vs central finite differences on 8x8
    target = torch.rand(1, 1, 8, 8, 3, dtype=torch.float64)
    pred = torch.rand(1, 1, 8, 8, 3, dtype=torch.float64, requires_grad=True)
    reconstruction_loss(pred, target).backward()
    eps = 1e-6
    rng = np.random.default_rng(1)
    for _ in range(10):
        i = tuple(rng.integers(0, s) for s in pred.shape)
        delta = torch.zeros_like(pred)
        delta[i] = eps
        with torch.no_grad():
            fd = (
                float(reconstruction_loss(pred + delta, target))
                - float(reconstruction_loss(pred - delta, target))
            ) / (2 * eps)
        auto = float(pred.grad[i])
        assert abs(fd - auto) <= 1e-3 * max(abs(fd), abs(auto), 1e-6)
    _report(3, "shape/gradient suite")


def test_criterion_4_sketch_goldens():
    flat = np.full((128, 128, 3), 0.37, np.float32)
    assert np.all(synthesize_sketch(flat) == 1.0)

    frame = sprite_frame(0.3)
    avg = np.mean([canny_edges(frame, k) for k in (3, 5, 7, 9)], axis=0)
    assert set(np.unique(avg)).issubset({0.0, 0.25, 0.5, 0.75, 1.0})

    a = synthesize_sketch(hflip(frame))[1:-1, 1:-1]
    b = hflip(synthesize_sketch(frame))[1:-1, 1:-1]
    assert np.array_equal(a, b)

    assert np.array_equal(synthesize_sketch(frame), synthesize_sketch(frame))
    _report(4, "sketch pipeline goldens")


def test_criterion_5_overfit_smoke():
    # stand-in corpus: 8 white-background sprite clips in the MGIF mold
    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    clips = [
        make_clip(
            7,
            source_id=f"c{i}",
            phase=i / 8,
            color=tuple(0.2 + 0.6 * np.random.default_rng(i).random(3)),
        )
        for i in range(8)
    ]
    pairs = []
    for clip in clips:
        window = enumerate_eval_windows(clip, 5)[0]
        inp, tgt = assemble_model_input(window, Variant.FULL)
        pairs.append((inp, tgt))
    model = init_model(ModelConfig())
    opt = Lookahead(model.parameters(), lr=0.001, betas=(0.9, 0.999), eps=1e-7, k=5, alpha=0.5)
    first_loss = None
    last_loss = None
    step = 0
    while step < 300:
        for batch in make_batches(pairs, 4, rng):
            xs, ys = batch_tensors(batch)
            stats = train_step(model, opt, xs, ys, 0.25)
            if first_loss is None:
                first_loss = stats["reconstruction"]
            last_loss = stats["reconstruction"]
            step += 1
            if step % 25 == 0:
                print(f"  overfit step {step}: 1-SSIM {last_loss:.4f}", flush=True)
            if step >= 300:
                break
    assert last_loss < 0.1, f"final 1-SSIM {last_loss:.4f} not below 0.1"
    assert last_loss < first_loss
    _report(5, "overfit smoke test")


@pytest.mark.skipif(
    not os.environ.get("SKETCHBETWEEN_LONG_TESTS"),
    reason="scaled ablation run takes hours; set SKETCHBETWEEN_LONG_TESTS=1",
)
def test_criterion_6_ablation_direction(tmp_path):
    root = tmp_path / "corpus"
    train_specs = [(f"tr{i:02d}", 6 + i % 4) for i in range(50)]
    test_specs = [(f"te{i:02d}", 6 + i % 3) for i in range(10)]
    make_corpus(root, train_specs, test_specs)
    corpus = scan_corpus(root, N=5)
    means = {}
    for variant in (Variant.FULL, Variant.NO_FINAL, Variant.NO_SKETCH):
        model, _ = train(
            corpus,
            ModelConfig(seed=0),
            TrainConfig(epochs=10, batch_size=16, seed=0),
            variant=variant,
            out_dir=tmp_path / f"run_{variant.value}",
        )
        means[variant] = evaluate(model, corpus, variant).mean_ssim
    assert means[Variant.FULL] >= means[Variant.NO_FINAL] >= means[Variant.NO_SKETCH]
    _report(6, "ablation direction")


@pytest.mark.skipif(
    not os.environ.get("SKETCHBETWEEN_MGIF_DIR"),
    reason="full MGIF reproduction is an opt-in long run; set SKETCHBETWEEN_MGIF_DIR",
)
def test_criterion_7_full_reproduction(tmp_path):
    corpus = scan_corpus(os.environ["SKETCHBETWEEN_MGIF_DIR"], N=5)
    model, _ = train(
        corpus,
        ModelConfig(seed=0),
        TrainConfig(epochs=100, batch_size=16, seed=0),
        out_dir=tmp_path / "full_run",
    )
    report = evaluate(model, corpus)
    assert report.mean_ssim >= 0.92
    assert report.mean_psnr >= 25.5
    _report(7, "full reproduction")


def test_criterion_8_determinism(tmp_path):
    root = tmp_path / "corpus"
    make_corpus(root, [("a", 6), ("b", 5)], [("t", 5)])
    for run in ("r1", "r2"):
        rc = main(
            [
                "train",
                "--data", str(root),
                "--out", str(tmp_path / run),
                "--epochs", "1",
                "--batch-size", "2",
                "--seed", "17",
                "--no-resume",
            ]
        )
        assert rc == 0
        rc = main(
            [
                "eval",
                "--ckpt", str(tmp_path / run / "ckpt_epoch_1.zip"),
                "--data", str(root),
                "--report", str(tmp_path / run / "report.json"),
            ]
        )
        assert rc == 0
    a, b = (tmp_path / "r1"), (tmp_path / "r2")
    assert (a / "ckpt_epoch_1.zip").read_bytes() == (b / "ckpt_epoch_1.zip").read_bytes()
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    _report(8, "determinism")
