"""Versioned checkpoint container.

A checkpoint is a single ``.npz`` archive readable with nothing but numpy and
json:

* key ``meta``: UTF-8 JSON bytes holding the format version, the serialized
  network configuration, the ordered tensor names, epoch / schedule position,
  optimizer skeleton, rng state flag, a metrics snapshot, and the parameter
  checksum;
* key ``tensor/<name>``: one array per model tensor (parameters and buffers),
  in the declared order;
* key ``opt/<i>``: optimizer state arrays referenced from the skeleton.

The checksum is sha256 over each tensor's name, shape, dtype, and raw bytes in
declared order, so two checkpoints with equal checksums hold bit-identical
weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .networks import DepthNet, NetworkConfig

FORMAT_VERSION = 1


def params_checksum(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr)
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(str(arr.dtype).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


@dataclass
class Checkpoint:
    """In-memory form of a saved training state."""

    config: NetworkConfig
    tensors: dict[str, np.ndarray]  # ordered: parameters then buffers
    epoch: int = 0
    schedule_step: int = 0
    optimizer: dict | None = None
    rng_state: np.ndarray | None = None
    metrics: dict | None = None
    checksum: str = ""

    def __post_init__(self):
        if not self.checksum:
            self.checksum = params_checksum(self.tensors)

    def build_model(self) -> DepthNet:
        model = DepthNet(self.config)
        state = {k: torch.from_numpy(np.ascontiguousarray(v)) for k, v in self.tensors.items()}
        model.load_state_dict(state, strict=True)
        model.eval()
        return model


def checkpoint_from_model(model: DepthNet, *, epoch: int = 0, schedule_step: int = 0,
                          optimizer: torch.optim.Optimizer | None = None,
                          metrics: dict | None = None,
                          capture_rng: bool = True) -> Checkpoint:
    tensors = {k: v.detach().cpu().numpy().copy() for k, v in model.state_dict().items()}
    opt_state = _pack_optimizer(optimizer) if optimizer is not None else None
    rng = torch.get_rng_state().numpy().copy() if capture_rng else None
    return Checkpoint(
        config=model.config,
        tensors=tensors,
        epoch=epoch,
        schedule_step=schedule_step,
        optimizer=opt_state,
        rng_state=rng,
        metrics=metrics,
    )


def _pack_optimizer(optimizer: torch.optim.Optimizer) -> dict:
    """State dict with tensors replaced by indices into an array list."""
    sd = optimizer.state_dict()
    arrays: list[np.ndarray] = []

    def pack(obj):
        if isinstance(obj, torch.Tensor):
            arrays.append(obj.detach().cpu().numpy().copy())
            return {"__tensor__": len(arrays) - 1}
        if isinstance(obj, dict):
            return {str(k): pack(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [pack(v) for v in obj]
        return obj

    return {"skeleton": pack(sd), "arrays": arrays}


def _unpack_optimizer(packed: dict) -> dict:
    arrays = packed["arrays"]

    def unpack(obj):
        if isinstance(obj, dict):
            if set(obj.keys()) == {"__tensor__"}:
                return torch.from_numpy(np.ascontiguousarray(arrays[obj["__tensor__"]]))
            out = {}
            for k, v in obj.items():
                out[int(k) if k.lstrip("-").isdigit() else k] = unpack(v)
            return out
        if isinstance(obj, list):
            return [unpack(v) for v in obj]
        return obj

    return unpack(packed["skeleton"])


def load_optimizer_state(ckpt: Checkpoint) -> dict | None:
    """Torch-ready optimizer state dict from a checkpoint, or None."""
    if ckpt.optimizer is None:
        return None
    return _unpack_optimizer(ckpt.optimizer)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    meta = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "tensor_names": list(ckpt.tensors.keys()),
        "epoch": ckpt.epoch,
        "schedule_step": ckpt.schedule_step,
        "metrics": ckpt.metrics,
        "checksum": ckpt.checksum,
        "has_rng_state": ckpt.rng_state is not None,
        "optimizer_skeleton": ckpt.optimizer["skeleton"] if ckpt.optimizer else None,
        "n_optimizer_arrays": len(ckpt.optimizer["arrays"]) if ckpt.optimizer else 0,
    }
    payload = {"meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for name, arr in ckpt.tensors.items():
        payload[f"tensor/{name}"] = arr
    if ckpt.optimizer:
        for i, arr in enumerate(ckpt.optimizer["arrays"]):
            payload[f"opt/{i}"] = arr
    if ckpt.rng_state is not None:
        payload["rng_state"] = ckpt.rng_state
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, **payload)


def load_checkpoint(path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta"]).decode("utf-8"))
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta['format_version']}")
        tensors = {name: z[f"tensor/{name}"] for name in meta["tensor_names"]}
        optimizer = None
        if meta["optimizer_skeleton"] is not None:
            arrays = [z[f"opt/{i}"] for i in range(meta["n_optimizer_arrays"])]
            optimizer = {"skeleton": meta["optimizer_skeleton"], "arrays": arrays}
        rng = z["rng_state"] if meta["has_rng_state"] else None
    ckpt = Checkpoint(
        config=NetworkConfig.from_dict(meta["config"]),
        tensors=tensors,
        epoch=meta["epoch"],
        schedule_step=meta["schedule_step"],
        optimizer=optimizer,
        rng_state=rng,
        metrics=meta["metrics"],
        checksum=meta["checksum"],
    )
    if ckpt.checksum != params_checksum(tensors):
        raise ValueError(f"checkpoint {path} failed its content checksum")
    return ckpt
