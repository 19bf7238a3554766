"""Weight-file serialization.

Layout (all integers little-endian):

    magic    8 bytes  b"SGSPWRN1"
    version  u32      format version (1)
    cfg_len  u32      length of the UTF-8 JSON-encoded WrnConfig
    cfg      bytes
    count    u32      number of named tensors
    per tensor:
        name_len  u16, name  UTF-8 bytes
        ndim      u8,  shape u32 * ndim
        data      float32 little-endian, C order

Tensors cover every parameter and batch-norm running statistic, so a
load followed by an eval-mode forward reproduces the saved model's
logits bit for bit.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from sigspec.errors import DataError
from sigspec.classifier.wrn import WrnConfig, WrnModel, build

MAGIC = b"SGSPWRN1"
VERSION = 1


def _tensors(model: WrnModel) -> dict[str, np.ndarray]:
    return {**model.named_params(), **model.named_state()}


def save_weights(model: WrnModel, path: Path) -> None:
    tensors = _tensors(model)
    cfg = json.dumps(model.cfg.to_json()).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: Path) -> WrnModel:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read weights {path}: {exc}") from exc
    view = memoryview(raw)
    if bytes(view[:8]) != MAGIC:
        raise DataError(f"{path}: not a weight file (bad magic)")
    version, cfg_len = struct.unpack_from("<II", view, 8)
    if version != VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    pos = 16
    cfg = WrnConfig.from_json(json.loads(bytes(view[pos:pos + cfg_len])))
    pos += cfg_len
    (count,) = struct.unpack_from("<I", view, pos)
    pos += 4

    model = build(cfg, seed=0)
    tensors = _tensors(model)
    seen = set()
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", view, pos)
        pos += 2
        name = bytes(view[pos:pos + name_len]).decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", view, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", view, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(view, dtype="<f4", count=size, offset=pos)
        pos += 4 * size
        if name not in tensors:
            raise DataError(f"{path}: unknown tensor {name!r}")
        if tensors[name].shape != tuple(shape):
            raise DataError(f"{path}: tensor {name!r} shape mismatch")
        tensors[name][...] = data.reshape(shape)
        seen.add(name)
    missing = set(tensors) - seen
    if missing:
        raise DataError(f"{path}: missing tensors {sorted(missing)[:3]}")
    return model
