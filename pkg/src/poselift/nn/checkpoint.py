"""Versioned JSON checkpoint container.

Layout::

    {
      "format": "poselift-checkpoint", "version": 1,
      "model": {...kind and hyperparameters...},
      "config": {...TrainConfig...},
      "epoch": int, "seed": int,
      "state": {name: {"shape": [...], "values": [...]}},
      "optimizer": {"step": int, "moments": {name: {"m": {...}, "v": {...}}}},
      "extra": {...}
    }

Arrays are stored row-major; Python's shortest round-trip float repr makes
the round trip bit-exact.
"""

import json
from pathlib import Path

import numpy as np

from ..errors import ValidationError

FORMAT = "poselift-checkpoint"
VERSION = 1

__all__ = ["array_to_json", "array_from_json", "save_checkpoint", "load_checkpoint"]


def array_to_json(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "values": arr.ravel().tolist()}


def array_from_json(obj):
    values = np.array(obj["values"], dtype=np.float64)
    shape = tuple(obj["shape"])
    if values.size != int(np.prod(shape)):
        raise ValidationError(f"array with shape {shape} has {values.size} values")
    return values.reshape(shape)


def save_checkpoint(path, model_spec, module, optimizer=None, config=None, epoch=0, seed=0, extra=None):
    """Serialize ``module`` state (plus optional optimizer moments) to ``path``."""
    state = {name: array_to_json(a) for name, a in module.state_dict().items()}
    opt = None
    if optimizer is not None:
        moments = {
            name: {"m": array_to_json(p.m), "v": array_to_json(p.v)}
            for name, p in module.named_parameters()
        }
        opt = {"step": optimizer.step_count, "moments": moments}
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "model": model_spec,
        "config": config,
        "epoch": int(epoch),
        "seed": int(seed),
        "state": state,
        "optimizer": opt,
        "extra": extra or {},
    }
    text = json.dumps(payload, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")
    return payload


def load_checkpoint(path):
    """Read a checkpoint file; arrays are returned as numpy arrays."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not a valid checkpoint ({exc})") from exc
    if payload.get("format") != FORMAT:
        raise ValidationError(f"{path}: unknown checkpoint format {payload.get('format')!r}")
    if payload.get("version") != VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    payload["state"] = {k: array_from_json(v) for k, v in payload["state"].items()}
    if payload.get("optimizer"):
        payload["optimizer"]["moments"] = {
            k: {"m": array_from_json(v["m"]), "v": array_from_json(v["v"])}
            for k, v in payload["optimizer"]["moments"].items()
        }
    return payload


def restore_optimizer(module, optimizer, opt_payload):
    params = dict(module.named_parameters())
    for name, mv in opt_payload["moments"].items():
        params[name].m[...] = mv["m"]
        params[name].v[...] = mv["v"]
    optimizer.step_count = opt_payload["step"]
