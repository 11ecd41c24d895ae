"""Checkpoint files: model configuration plus named parameter tensors.

The container is JSON with three top-level keys:

* ``format_version`` - integer, currently 1;
* ``config`` - the ``ModelConfig`` fields
  (``hidden_size``, ``num_layers``, ``encoder``, ``num_classes``, ``seed``);
* ``params`` - one entry per named tensor (see ``network.param_shapes`` for
  the key catalogue, e.g. ``gru.l0.fwd.w_update``, ``reg.w1``), stored as
  nested row-major lists of decimal floats.

Python's float formatting emits shortest round-trip decimals, so a save/load
cycle reproduces every tensor bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict

import numpy as np

from .network import ModelConfig, param_shapes

__all__ = ["FORMAT_VERSION", "CheckpointError", "save_checkpoint", "load_checkpoint"]

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, mismatched or structurally invalid checkpoints."""


def save_checkpoint(params: dict, config: ModelConfig, path) -> None:
    expected = param_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise CheckpointError(f"parameter names do not match config: missing={missing}, extra={extra}")
    payload = {
        "format_version": FORMAT_VERSION,
        "config": asdict(config),
        "params": {name: params[name].tolist() for name in expected},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, allow_nan=False)


def load_checkpoint(path) -> tuple[dict, ModelConfig]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: corrupt checkpoint (invalid JSON at line {e.lineno})") from e
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = payload["format_version"]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
    try:
        config = ModelConfig(**payload["config"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: bad config block: {e}") from e
    raw = payload.get("params")
    if not isinstance(raw, dict):
        raise CheckpointError(f"{path}: missing params block")
    params = {}
    for name, shape in param_shapes(config).items():
        if name not in raw:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        arr = np.array(raw[name], dtype=np.float64)
        if arr.shape != shape:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arr.shape}, config requires {shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{path}: tensor {name!r} contains non-finite values")
        params[name] = arr
    return params, config
