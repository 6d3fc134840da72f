"""Command-line entry point: sketch, prepare, train, eval, infer."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import data, media_io, metrics, sketchgen, training
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import SketchBetweenError
from .model import ModelConfig, init_model

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(SketchBetweenError):
    pass


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    return json.loads(p.read_text())


def _resolve_configs(args) -> tuple[ModelConfig, training.TrainConfig]:
    """Merge flags > config file > defaults."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    model_d = ModelConfig().to_dict()
    model_d.update(file_cfg.get("model", {}))
    train_d = training.TrainConfig().to_dict()
    train_d.update(file_cfg.get("train", {}))
    for name, target in (
        ("epochs", train_d),
        ("batch_size", train_d),
        ("learning_rate", train_d),
        ("seed", None),
    ):
        val = getattr(args, name, None)
        if val is None:
            continue
        if name == "seed":
            train_d["seed"] = val
            model_d["seed"] = val
            train_d.setdefault("augment", {})
            if isinstance(train_d["augment"], dict):
                train_d["augment"]["seed"] = val
        else:
            target[name] = val
    return ModelConfig.from_dict(model_d), training.TrainConfig.from_dict(train_d)


def _write_resolved_config(out_dir: Path, model_cfg, train_cfg, extra: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {"model": model_cfg.to_dict(), "train": train_cfg.to_dict(), **extra}
    (out_dir / "resolved_config.json").write_text(
        json.dumps(resolved, indent=2, sort_keys=True)
    )


def _load_image(path: str) -> np.ndarray:
    with Image.open(path) as img:
        return media_io.resize_to_canonical(media_io.to_unit_rgb(img))


def cmd_sketch(args) -> int:
    clip = media_io.decode_animation(args.input)
    kernels = tuple(int(k) for k in args.kernels.split(","))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        sketch = sketchgen.synthesize_sketch(frame, kernels, args.low, args.high)
        Image.fromarray(media_io.frame_to_u8(sketch)).save(
            out_dir / f"sketch_{i:04d}.png"
        )
    print(f"wrote {len(clip.frames)} sketches to {out_dir}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    model_cfg, train_cfg = _resolve_configs(args)
    out_dir = Path(args.out)
    _write_resolved_config(out_dir, model_cfg, train_cfg, {"variant": args.variant})
    corpus = data.scan_corpus(args.data, model_cfg.N)
    manifest = []
    for entry in corpus.split(args.split):
        clip = media_io.decode_animation(entry.path)
        for window in data.enumerate_eval_windows(clip, corpus.N):
            inp, _ = data.assemble_model_input(window, args.variant)
            stack_dir = out_dir / f"{window.source_id}_{window.start:04d}"
            stack_dir.mkdir(parents=True, exist_ok=True)
            for i in range(corpus.N):
                Image.fromarray(media_io.frame_to_u8(inp.stacked[i])).save(
                    stack_dir / f"input_{i:04d}.png"
                )
            manifest.append(
                {
                    "source_id": window.source_id,
                    "start": window.start,
                    "variant": args.variant,
                    "dir": stack_dir.name,
                }
            )
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"prepared {len(manifest)} windows in {out_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    model_cfg, train_cfg = _resolve_configs(args)
    out_dir = Path(args.out)
    _write_resolved_config(
        out_dir, model_cfg, train_cfg, {"variant": args.variant, "data": str(args.data)}
    )
    corpus = data.scan_corpus(args.data, model_cfg.N)
    def log(rec):
        print(
            f"epoch {rec.epoch}: recon {rec.reconstruction:.4f} "
            f"codebook {rec.codebook:.4f} dead {rec.dead_codes} "
            f"({rec.wall_time:.1f}s)"
        )
    training.train(
        corpus,
        model_cfg,
        train_cfg,
        variant=args.variant,
        out_dir=out_dir,
        resume=not args.no_resume,
        log=log,
    )
    print(f"training done; checkpoints in {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.ckpt)
    corpus = data.scan_corpus(args.data, model.config.N)
    report = metrics.evaluate(model, corpus, args.variant)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(report.to_json())
    print(
        f"{report.num_windows} windows, mean SSIM {report.mean_ssim:.4f}, "
        f"mean PSNR {report.mean_psnr:.2f} dB -> {args.report}"
    )
    return EXIT_OK


def cmd_infer(args) -> int:
    model = load_checkpoint(args.ckpt)
    n = model.config.N
    if len(args.sketch) != n - 2:
        raise UsageError(
            f"checkpoint expects N={n}: provide exactly {n - 2} sketches, "
            f"got {len(args.sketch)}"
        )
    frames = [_load_image(args.first)]
    for s in args.sketch:
        sk = _load_image(s)
        gray = sk.mean(axis=2, keepdims=True)
        frames.append(np.repeat(gray, 3, axis=2).astype(np.float32))
    frames.append(_load_image(args.last))
    x = torch.from_numpy(np.stack(frames))[None]
    model.eval()
    with torch.no_grad():
        recon = model(x)[0][0].numpy()
    out_frames = [recon[i] for i in range(n)]
    if args.paste_keyframes:
        out_frames[0] = frames[0]
        out_frames[-1] = frames[-1]
    clip = media_io.AnimationClip(frames=out_frames, source_id="infer")
    media_io.encode_animation(clip, args.out, fps=args.fps)
    print(f"wrote {n}-frame animation to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchbetween",
        description="Render sketched in-between frames for sprite animations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sketch", help="turn an animation into per-frame sketch PNGs")
    p.add_argument("input", help="GIF file or PNG frame directory")
    p.add_argument("--out", required=True)
    p.add_argument("--kernels", default="3,5,7,9")
    p.add_argument("--low", type=float, default=50.0)
    p.add_argument("--high", type=float, default=150.0)
    p.set_defaults(func=cmd_sketch)

    p = sub.add_parser("prepare", help="materialize assembled windows for inspection")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", choices=["train", "test"])
    p.add_argument("--variant", default="full", choices=[v.value for v in data.Variant])
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", default="full", choices=[v.value for v in data.Variant])
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--variant", default="full", choices=[v.value for v in data.Variant])
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="render in-betweens from keyframes and sketches")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--first", required=True, help="first keyframe image")
    p.add_argument("--last", required=True, help="last keyframe image")
    p.add_argument("--sketch", action="append", default=[], help="in-between sketch, repeatable, in order")
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--paste-keyframes", action="store_true", help="copy the original keyframes into the output instead of their reconstructions")
    p.set_defaults(func=cmd_infer)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SketchBetweenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
