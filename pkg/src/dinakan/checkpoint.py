"""Binary checkpoint format.

Layout (all integers little-endian):

    8 bytes   magic "MVT2CKPT"
    u32       version: 1 = float32 payloads, 2 = float64 payloads
    u32 + n   UTF-8 config document (JSON)
    u32       tensor count
    per tensor:
        u32 + n   UTF-8 name
        u8        rank
        u32 * rank extents
        raw floats (little-endian, width per version)

Model parameters and buffers come first under their registry names;
optimizer state follows under the reserved "opt." prefix.  Version 2
exists so float64 training resumes bit-exactly; version 1 is the
compact interchange form.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"MVT2CKPT"
_WIDTH = {1: ("<f4", np.float32), 2: ("<f8", np.float64)}


@dataclass
class Checkpoint:
    version: int
    config_doc: str
    tensors: dict
    epoch: int = 0
    opt_state: dict = field(default_factory=dict)


def _pack_str(text):
    blob = text.encode("utf-8")
    return struct.pack("<I", len(blob)) + blob


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise ValueError("checkpoint truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u8(self):
        return self.take(1)[0]

    def text(self):
        return self.take(self.u32()).decode("utf-8")


def save_checkpoint(path, model, optimizer=None, epoch=0, config_doc=None):
    """Serialize model tensors (and optimizer state) to ``path``."""
    doc = config_doc if config_doc is not None else model.cfg.to_json()
    dtype = model.head.weight.data.dtype
    version = 2 if dtype == np.float64 else 1
    spec, _ = _WIDTH[version]
    entries = list(model.named_tensors())
    extra = {}
    if optimizer is not None:
        extra.update(optimizer.state_tensors())
    extra["opt.epoch"] = np.asarray([float(epoch)])
    entries += list(extra.items())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", version))
        fh.write(_pack_str(doc))
        fh.write(struct.pack("<I", len(entries)))
        for name, tensor in entries:
            arr = np.asarray(tensor.data if hasattr(tensor, "data") else tensor, dtype=spec)
            if arr.ndim and not arr.flags.c_contiguous:
                arr = np.ascontiguousarray(arr)
            fh.write(_pack_str(name))
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    reader = _Reader(blob)
    if reader.take(len(MAGIC)) != MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    version = reader.u32()
    if version not in _WIDTH:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    spec, np_dtype = _WIDTH[version]
    config_doc = reader.text()
    count = reader.u32()
    tensors = {}
    for _ in range(count):
        name = reader.text()
        rank = reader.u8()
        extents = struct.unpack(f"<{rank}I", reader.take(4 * rank)) if rank else ()
        n_values = int(np.prod(extents)) if extents else 1
        raw = reader.take(n_values * np.dtype(spec).itemsize)
        tensors[name] = np.frombuffer(raw, dtype=spec).reshape(extents).astype(np_dtype)
    if reader.pos != len(blob):
        raise ValueError(f"{path}: {len(blob) - reader.pos} trailing bytes")
    opt_state = {k: v for k, v in tensors.items() if k.startswith("opt.")}
    model_tensors = {k: v for k, v in tensors.items() if not k.startswith("opt.")}
    epoch = int(opt_state.pop("opt.epoch", np.zeros(1)).reshape(-1)[0])
    return Checkpoint(version=version, config_doc=config_doc, tensors=model_tensors,
                      epoch=epoch, opt_state=opt_state)


def load_into_model(model, checkpoint):
    """Copy checkpoint tensors into a built model, strict on names and shapes."""
    available = dict(checkpoint.tensors)
    for name, tensor in model.named_tensors():
        if name not in available:
            raise KeyError(f"checkpoint is missing tensor {name!r}")
        value = available.pop(name)
        if tuple(value.shape) != tuple(tensor.shape):
            raise ValueError(
                f"tensor {name!r} shape mismatch: checkpoint {value.shape} vs model {tensor.shape}"
            )
        tensor.data = value.astype(tensor.data.dtype)
    if available:
        first = sorted(available)[0]
        raise KeyError(f"checkpoint holds unknown tensor {first!r}")
    return model
