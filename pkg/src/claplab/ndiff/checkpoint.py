"""Binary checkpoint format for ParamStore contents.

Layout: an 8-byte magic, a little-endian uint64 manifest length, a UTF-8
JSON manifest, then the raw array buffers back to back in manifest order.
Buffers are written little-endian so files round-trip bit-for-bit across
machines.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import ParamStore

MAGIC = b"NDCKPT01"


class CheckpointError(RuntimeError):
    pass


def _le(dtype: np.dtype) -> np.dtype:
    return dtype.newbyteorder("<") if dtype.byteorder == ">" else dtype


def save_store(path: str | Path, store: ParamStore, meta: dict | None = None) -> None:
    params = []
    buffers = []
    for name, p in store.tensors():
        arr = np.ascontiguousarray(p.data, dtype=_le(p.data.dtype))
        params.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)})
        buffers.append(arr.tobytes())
    slots = []
    for name in store.names():
        for slot_name in sorted(store._slots.get(name, {})):
            arr = store._slots[name][slot_name]
            arr = np.ascontiguousarray(arr, dtype=_le(arr.dtype))
            slots.append(
                {"param": name, "slot": slot_name, "dtype": str(arr.dtype), "shape": list(arr.shape)}
            )
            buffers.append(arr.tobytes())
    manifest = {
        "meta": meta or {},
        "step_count": store.step_count,
        "dtype": str(store.dtype),
        "params": params,
        "slots": slots,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        for buf in buffers:
            f.write(buf)


def read_manifest(path: str | Path) -> dict:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        n = int.from_bytes(f.read(8), "little")
        return json.loads(f.read(n).decode("utf-8"))


def load_store(path: str | Path) -> tuple[ParamStore, dict]:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        n = int.from_bytes(f.read(8), "little")
        manifest = json.loads(f.read(n).decode("utf-8"))
        store = ParamStore(dtype=np.dtype(manifest["dtype"]))
        store.step_count = int(manifest["step_count"])
        for entry in manifest["params"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated buffer for {entry['name']}")
            arr = np.frombuffer(buf, dtype=dtype).reshape(shape)
            store.create(entry["name"], arr)
        for entry in manifest["slots"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            buf = f.read(count * dtype.itemsize)
            if len(buf) != count * dtype.itemsize:
                raise CheckpointError(
                    f"{path}: truncated buffer for {entry['param']}/{entry['slot']}"
                )
            arr = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
            store._slots.setdefault(entry["param"], {})[entry["slot"]] = arr
        if f.read(1):
            raise CheckpointError(f"{path}: trailing bytes after last buffer")
    return store, manifest["meta"]
