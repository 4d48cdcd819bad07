"""Versioned binary model checkpoints.

Layout (all little-endian):
    magic    4s   b"PTFM"
    version  u16  currently 1
    arch     u8   0=neumf 1=ngcf 2=lightgcn
    pad      u8
    n_users  u32
    n_items  u32
    dim      u32
    layers   u32  propagation layers (0 for neumf)
    ntensor  u32
    then per tensor: ndim u8, shape u32 * ndim, float64 data row-major.

Only parameter tensors are stored; optimizer state is not part of the format.
"""

from __future__ import annotations

import struct

import numpy as np

from .graph import NGCF, LightGCN
from .neumf import NeuMF

MAGIC = b"PTFM"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIIII")
_ARCH_TAGS = {"neumf": 0, "ngcf": 1, "lightgcn": 2}
_TAG_ARCH = {v: k for k, v in _ARCH_TAGS.items()}


class CheckpointError(ValueError):
    """Bad magic, version, or truncated checkpoint data."""


def save_model(model, path: str):
    tensors = model.parameter_tensors()
    layers = getattr(model, "n_layers", 0)
    parts = [_HEADER.pack(MAGIC, VERSION, _ARCH_TAGS[model.arch], 0,
                          model.n_users, model.n_items, model.dim, layers,
                          len(tensors))]
    for _, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


def load_model(path: str):
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, arch_tag, _, n_users, n_items, dim, layers, ntensor = \
        _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if arch_tag not in _TAG_ARCH:
        raise CheckpointError(f"unknown architecture tag {arch_tag}")
    arch = _TAG_ARCH[arch_tag]

    offset = _HEADER.size
    tensors = []
    for _ in range(ntensor):
        if offset + 1 > len(buf):
            raise CheckpointError("truncated tensor header")
        ndim = buf[offset]
        offset += 1
        if offset + 4 * ndim > len(buf):
            raise CheckpointError("truncated tensor shape")
        shape = struct.unpack_from(f"<{ndim}I", buf, offset)
        offset += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        end = offset + 8 * count
        if end > len(buf):
            raise CheckpointError("truncated tensor data")
        tensors.append(np.frombuffer(buf[offset:end], dtype="<f8").reshape(shape).copy())
        offset = end
    if offset != len(buf):
        raise CheckpointError("trailing bytes after last tensor")

    if arch == "neumf":
        model = NeuMF(n_users, n_items, dim)
    elif arch == "ngcf":
        model = NGCF(n_users, n_items, dim, n_layers=layers)
    else:
        model = LightGCN(n_users, n_items, dim, n_layers=layers)
    names = [name for name, _ in model.parameter_tensors()]
    if len(names) != len(tensors):
        raise CheckpointError(f"expected {len(names)} tensors, found {len(tensors)}")
    for (name, target), arr in zip(model.parameter_tensors(), tensors):
        if target.shape != arr.shape:
            raise CheckpointError(f"tensor {name}: shape {arr.shape} != {target.shape}")
        target[...] = arr
    return model
