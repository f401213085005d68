"""Model checkpoints: manifest.json + one flat little-endian float32 blob.

Same container conventions as feature archives. Batch-norm running stats are
stored alongside the trainable parameters under ``<bn>.running_mean`` /
``<bn>.running_var`` names.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..errors import CorruptArchive, VersionError
from .network import Model, ModelConfig

CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "params.bin"


def save_model(model: Model, path) -> None:
    os.makedirs(path, exist_ok=True)
    entries = []
    offset = 0
    with open(os.path.join(path, BLOB_NAME), "wb") as blob:
        def emit(name: str, arr: np.ndarray):
            nonlocal offset
            data = np.ascontiguousarray(arr, dtype="<f4")
            entries.append({"name": name, "shape": list(data.shape), "offset": offset})
            blob.write(data.tobytes())
            offset += data.nbytes

        for name, tensor in model.params.items():
            emit(name, tensor.data)
        for bn_name, state in model.bn_running.items():
            emit(f"{bn_name}.running_mean", state["mean"])
            emit(f"{bn_name}.running_var", state["var"])

    manifest = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "tensors": entries,
    }
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True)


def load_model(path) -> Model:
    try:
        with open(os.path.join(path, MANIFEST_NAME), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptArchive(f"cannot read checkpoint manifest in {path}: {exc}") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {manifest.get('version')!r}")

    blob_path = os.path.join(path, BLOB_NAME)
    blob = np.fromfile(blob_path, dtype="<f4")
    expected = sum(int(np.prod(e["shape"])) for e in manifest["tensors"])
    if blob.size != expected:
        raise CorruptArchive(f"blob holds {blob.size} floats, manifest expects {expected}")

    config = ModelConfig.from_dict(manifest["config"])
    model = Model.build(config, seed=0)
    by_name = {e["name"]: e for e in manifest["tensors"]}

    def fetch(name: str) -> np.ndarray:
        entry = by_name.get(name)
        if entry is None:
            raise CorruptArchive(f"checkpoint is missing tensor {name!r}")
        start = entry["offset"] // 4
        size = int(np.prod(entry["shape"]))
        return blob[start : start + size].reshape(entry["shape"])

    for name, tensor in model.params.items():
        arr = fetch(name).astype(model.dtype)
        if arr.shape != tensor.data.shape:
            raise CorruptArchive(f"tensor {name!r} has shape {arr.shape}, expected {tensor.data.shape}")
        tensor.data = arr
    for bn_name, state in model.bn_running.items():
        state["mean"] = fetch(f"{bn_name}.running_mean").astype(np.float64)
        state["var"] = fetch(f"{bn_name}.running_var").astype(np.float64)
    return model
