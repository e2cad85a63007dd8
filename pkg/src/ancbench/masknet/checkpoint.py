"""Parameter checkpoints: flat little-endian float64 binary plus a JSON manifest."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from .config import MasknetConfig
from .model import ModelParams, check_params


def save_checkpoint(path, params: ModelParams, cfg: MasknetConfig) -> tuple[Path, Path]:
    """Write ``<path>.bin`` and ``<path>.json``."""
    stem = Path(path)
    binary = stem.with_suffix(".bin")
    manifest = stem.with_suffix(".json")
    params.flatten().astype("<f8").tofile(binary)
    manifest.write_text(json.dumps({
        "format": "float64-le",
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in params.items()],
    }, indent=1))
    return binary, manifest


def load_checkpoint(path) -> tuple[ModelParams, MasknetConfig]:
    stem = Path(path)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    cfg = MasknetConfig(**manifest["config"])
    if cfg.digest() != manifest["config_hash"]:
        raise ConfigurationError(f"{stem}: config hash mismatch")
    flat = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
    arrays, i = {}, 0
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        arrays[entry["name"]] = flat[i : i + size].reshape(shape).copy()
        i += size
    if i != flat.size:
        raise ConfigurationError(f"{stem}: binary holds {flat.size} values, manifest describes {i}")
    params = ModelParams(arrays)
    check_params(params, cfg)
    return params, cfg
