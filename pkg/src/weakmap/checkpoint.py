"""Binary checkpoint: versioned header, embedded run config, named tensors.

Layout (little-endian)::

    b"WMAPCKPT"  u32 version  u32 len  <config text, utf-8>
    u32 count
    count x { u16 len <name>  u8 rank  rank x u32 extent  float64 values }
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from weakmap.backbone import ModelParams, WeakMapNet
from weakmap.config import RunConfig
from weakmap.synthdata import Normalizer
from weakmap.tensor import RunningStats, Tensor

MAGIC = b"WMAPCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _records(model: WeakMapNet) -> dict[str, np.ndarray]:
    arrays = dict(model.params.arrays())
    if model.norm is not None:
        arrays["norm.mean"] = np.asarray(model.norm.mean, dtype=np.float64).reshape(-1)
        arrays["norm.std"] = np.asarray(model.norm.std, dtype=np.float64).reshape(-1)
    return arrays


def dumps(model: WeakMapNet, config: RunConfig) -> bytes:
    cfg = config.dumps().encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg]
    arrays = _records(model)
    chunks.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        key = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(key)) + key)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks)


def save(path: str | os.PathLike, model: WeakMapNet, config: RunConfig) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(model, config))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(data: bytes) -> tuple[WeakMapNet, RunConfig]:
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("not a weakmap checkpoint (bad magic)")
    version, cfg_len = r.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    config = RunConfig.loads(r.take(cfg_len, "config").decode("utf-8"))
    (count,) = r.unpack("<I", "tensor count")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = r.unpack("<H", "name length")
        name = r.take(n, "name").decode("utf-8")
        (rank,) = r.unpack("<B", f"{name} rank")
        shape = r.unpack(f"<{rank}I", f"{name} extents")
        size = int(np.prod(shape)) if rank else 1
        raw = r.take(8 * size, f"{name} values")
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after last tensor")
    return _assemble(arrays, config), config


def load(path: str | os.PathLike) -> tuple[WeakMapNet, RunConfig]:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    return loads(data)


def _assemble(arrays: dict[str, np.ndarray], config: RunConfig) -> WeakMapNet:
    from weakmap.backbone import init_params

    template = init_params(config.backbone(), config.head(), seed=0)
    params = ModelParams()
    for name, t in template.tensors.items():
        if name not in arrays:
            raise CheckpointError(f"checkpoint lacks tensor {name!r}")
        arr = arrays[name]
        if arr.shape != t.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} does not match config {t.shape}")
        params.tensors[name] = Tensor(arr, requires_grad=True, name=name)
    for name, rs in template.running.items():
        try:
            mean, var = arrays[f"{name}.running_mean"], arrays[f"{name}.running_var"]
        except KeyError:
            raise CheckpointError(f"checkpoint lacks running statistics for {name!r}") from None
        params.running[name] = RunningStats(mean.copy(), var.copy(), rs.momentum)
    norm = None
    if "norm.mean" in arrays:
        norm = Normalizer(arrays["norm.mean"].copy(), arrays["norm.std"].copy())
    return WeakMapNet(config.backbone(), config.head(), params, norm)
