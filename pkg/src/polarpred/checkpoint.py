"""PPCK checkpoints: magic, version, then a named table of PTN1 tensors.

Layout: b"PPCK", u32 version (1), u32 entry count, then per entry a u32 name
length, the UTF-8 name, and one PTN1 record.  Model configuration is encoded
as scalar `meta/*` entries (string fields as small integer codes), parameters
as `param/*`, batchnorm running statistics as `state/*`, and optimizer moments
as `adam/*`.  Payloads are f32, so bitwise train/resume equivalence holds for
f32 training (the default precision).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import optim, tensor
from .predictors import (
    SUBVARIANTS,
    VARIANTS,
    Predictor,
    PredictorConfig,
    build_predictor,
)

PPCK_MAGIC = b"PPCK"
PPCK_VERSION = 1

_META_FIELDS = (
    "channels", "kernel_size", "cnn_stages", "cnn_kernel",
    "eps_amp", "bn_center", "whole_patch", "block_size", "search_radius",
)


@dataclass
class CheckpointData:
    config: PredictorConfig
    params: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    adam: dict | None
    epoch: int


def _config_entries(cfg: PredictorConfig) -> dict[str, np.ndarray]:
    out = {
        "meta/variant": np.float32(VARIANTS.index(cfg.variant)),
        "meta/subvariant": np.float32(SUBVARIANTS.index(cfg.subvariant)),
        "meta/precision": np.float32(0 if cfg.precision == "f32" else 1),
    }
    for name in _META_FIELDS:
        out[f"meta/{name}"] = np.float32(getattr(cfg, name))
    return out


def _config_from_entries(entries: dict[str, np.ndarray]) -> PredictorConfig:
    def scalar(name):
        return float(np.asarray(entries[name]).reshape(()))

    cfg = PredictorConfig(
        variant=VARIANTS[int(scalar("meta/variant"))],
        subvariant=SUBVARIANTS[int(scalar("meta/subvariant"))],
        precision="f32" if int(scalar("meta/precision")) == 0 else "f64",
    )
    for name in _META_FIELDS:
        current = getattr(cfg, name)
        raw = scalar(f"meta/{name}")
        if isinstance(current, bool):
            setattr(cfg, name, bool(raw))
        elif isinstance(current, int):
            setattr(cfg, name, int(raw))
        else:
            setattr(cfg, name, float(raw))
    return cfg


def save_checkpoint(path, predictor: Predictor, adam: optim.AdamState | None = None,
                    epoch: int = 0) -> None:
    entries: dict[str, np.ndarray] = _config_entries(predictor.config)
    entries["meta/epoch"] = np.float32(epoch)
    for name, var in predictor.params.items():
        entries[f"param/{name}"] = var.value
    for name, arr in predictor.state.items():
        entries[f"state/{name}"] = arr
    if adam is not None:
        entries["adam/t"] = np.float32(adam.t)
        entries["adam/lr"] = np.float32(adam.lr)
        for name in predictor.params:
            entries[f"adam/m/{name}"] = adam.m[name]
            entries[f"adam/v/{name}"] = adam.v[name]
    blob = bytearray()
    blob += PPCK_MAGIC
    blob += struct.pack("<II", PPCK_VERSION, len(entries))
    for name, arr in entries.items():
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += tensor.ptn1_to_bytes(np.asarray(arr))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> CheckpointData:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PPCK_MAGIC:
        raise ValueError(f"bad PPCK magic at byte 0 in {path}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != PPCK_VERSION:
        raise ValueError(f"unsupported PPCK version {version}")
    pos = 12
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        arr, pos = tensor.ptn1_read(blob, pos)
        entries[name] = arr
    config = _config_from_entries(entries)
    params = {k[len("param/"):]: v for k, v in entries.items() if k.startswith("param/")}
    state = {k[len("state/"):]: v for k, v in entries.items() if k.startswith("state/")}
    adam = None
    if "adam/t" in entries:
        adam = {
            "t": int(np.asarray(entries["adam/t"]).reshape(())),
            "lr": float(np.asarray(entries["adam/lr"]).reshape(())),
            "m": {k[len("adam/m/"):]: v for k, v in entries.items() if k.startswith("adam/m/")},
            "v": {k[len("adam/v/"):]: v for k, v in entries.items() if k.startswith("adam/v/")},
        }
    epoch = int(np.asarray(entries["meta/epoch"]).reshape(()))
    return CheckpointData(config, params, state, adam, epoch)


def restore_predictor(ckpt: CheckpointData) -> Predictor:
    predictor = build_predictor(ckpt.config, np.random.default_rng(0))
    dtype = ckpt.config.dtype
    for name, var in predictor.params.items():
        if name not in ckpt.params:
            raise ValueError(f"checkpoint missing parameter {name!r}")
        if tuple(ckpt.params[name].shape) != tuple(var.value.shape):
            raise ValueError(
                f"checkpoint parameter {name!r} has extent {ckpt.params[name].shape}, "
                f"expected {var.value.shape}"
            )
        var.value = ckpt.params[name].astype(dtype)
    for name, arr in predictor.state.items():
        if name in ckpt.state:
            arr[...] = ckpt.state[name].astype(arr.dtype)
    return predictor


def restore_adam(ckpt: CheckpointData, predictor: Predictor) -> optim.AdamState:
    adam = optim.AdamState(predictor.params, lr=ckpt.adam["lr"] if ckpt.adam else optim.DEFAULT_BASE_LR)
    if ckpt.adam is not None:
        adam.t = ckpt.adam["t"]
        dtype = predictor.config.dtype
        for name in predictor.params:
            adam.m[name] = ckpt.adam["m"][name].astype(dtype)
            adam.v[name] = ckpt.adam["v"][name].astype(dtype)
    return adam
