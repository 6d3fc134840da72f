"""Checkpoint archives: a zip holding a JSON manifest plus raw tensor blobs.

Blobs are little-endian and the zip is written with fixed timestamps and no
compression, so identical states produce byte-identical files.
"""

from __future__ import annotations

import json
import os
import zipfile
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError
from .model import ModelConfig, VqVae

FORMAT_VERSION = "sketchbetween-ckpt-1"
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)
_DTYPES = {"float32": "<f4", "int64": "<i8"}


def _tensor_bytes(t: torch.Tensor) -> tuple[bytes, str]:
    arr = t.detach().cpu().numpy()
    if arr.dtype == np.float32:
        name = "float32"
    elif arr.dtype == np.int64:
        name = "int64"
    else:  # normalize oddball dtypes (e.g. float64 optimizer scalars)
        arr = arr.astype(np.float32)
        name = "float32"
    return np.ascontiguousarray(arr).astype(_DTYPES[name]).tobytes(), name


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    zf.writestr(info, payload)


def save_checkpoint(
    model: VqVae,
    path: str | os.PathLike,
    extra_tensors: dict[str, torch.Tensor] | None = None,
    extra_meta: dict | None = None,
) -> None:
    """Write model weights, codebook, config, and step counter; optional
    extra tensors (optimizer slots) go under the 'extra/' prefix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, torch.Tensor] = dict(model.state_dict())
    for k, v in (extra_tensors or {}).items():
        tensors[f"extra/{k}"] = v
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "step": int(model.step),
        "extra_meta": extra_meta or {},
        "tensors": {},
    }
    blobs = {}
    for name in sorted(tensors):
        payload, dtype = _tensor_bytes(tensors[name])
        manifest["tensors"][name] = {
            "shape": list(tensors[name].shape),
            "dtype": dtype,
            "bytes": len(payload),
        }
        blobs[name] = payload
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(
            zf, "manifest.json", json.dumps(manifest, sort_keys=True, indent=1).encode()
        )
        for name in sorted(blobs):
            _write_entry(zf, f"tensors/{name}", blobs[name])


def _read_tensor(zf: zipfile.ZipFile, name: str, meta: dict) -> torch.Tensor:
    try:
        payload = zf.read(f"tensors/{name}")
    except KeyError:
        raise CheckpointError(f"manifest lists tensor {name!r} but blob is missing")
    if len(payload) != meta["bytes"]:
        raise CheckpointError(
            f"tensor {name!r}: expected {meta['bytes']} bytes, found {len(payload)}"
        )
    arr = np.frombuffer(payload, dtype=_DTYPES[meta["dtype"]]).copy()
    expected = int(np.prod(meta["shape"])) if meta["shape"] else 1
    if arr.size != expected:
        raise CheckpointError(f"tensor {name!r}: blob size does not match shape")
    return torch.from_numpy(arr.reshape(meta["shape"]))


def load_checkpoint(path: str | os.PathLike, with_extras: bool = False):
    """Restore a model bit-exactly; optionally also return the extra tensors
    and metadata saved alongside it."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no such checkpoint: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            try:
                manifest = json.loads(zf.read("manifest.json"))
            except KeyError:
                raise CheckpointError(f"{path}: missing manifest.json")
            version = manifest.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(
                    f"{path}: format {version!r} != expected {FORMAT_VERSION!r}"
                )
            config = ModelConfig.from_dict(manifest["config"])
            model = VqVae(config)
            state, extras = {}, {}
            for name, meta in manifest["tensors"].items():
                tensor = _read_tensor(zf, name, meta)
                if name.startswith("extra/"):
                    extras[name[len("extra/") :]] = tensor
                else:
                    state[name] = tensor
            model.load_state_dict(state)
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"{path}: corrupt archive: {exc}") from exc
    if with_extras:
        return model, extras, manifest.get("extra_meta", {})
    return model
