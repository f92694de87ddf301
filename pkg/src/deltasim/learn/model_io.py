"""Model file I/O.

Little-endian layout: magic "TMDL", version u32, header_len u32, JSON
header (algorithm tag, configs, normalization stats, training seed), then
the parameter blob as 64-bit floats in declaration order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..dataset import NormStats
from ..errors import CorruptFile, VersionMismatch

__all__ = ["save_model", "load_model"]

TMDL_MAGIC = b"TMDL"
TMDL_VERSION = 1


def _registry():
    from .bc import BcPolicy
    from .diffusion import DiffusionPolicy
    from .ibc import IbcPolicy

    return {cls.algo: cls for cls in (DiffusionPolicy, BcPolicy, IbcPolicy)}


def save_model(policy, path) -> None:
    header = {
        "algo": policy.algo,
        "config": policy.config_dict(),
        "stats": policy.stats.to_dict(),
        "seed": policy.train_cfg.seed,
        "param_shapes": [list(p.value.shape) for p in policy.params()],
    }
    blob = np.concatenate([p.value.astype("<f8").ravel() for p in policy.params()])
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(TMDL_MAGIC)
        f.write(struct.pack("<I", TMDL_VERSION))
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
        f.write(blob.tobytes())


def load_model(path, dtype=np.float32):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12:
        raise CorruptFile("file too short for header", offset=len(data))
    if data[:4] != TMDL_MAGIC:
        raise CorruptFile("bad magic", offset=0)
    (version,) = struct.unpack("<I", data[4:8])
    if version != TMDL_VERSION:
        raise VersionMismatch(f"model file version {version}, expected {TMDL_VERSION}")
    (hlen,) = struct.unpack("<I", data[8:12])
    if 12 + hlen > len(data):
        raise CorruptFile("truncated header", offset=12)
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))

    registry = _registry()
    if header["algo"] not in registry:
        raise CorruptFile(f"unknown algorithm tag {header['algo']!r}")
    stats = NormStats.from_dict(header["stats"])
    policy = registry[header["algo"]].from_config(header["config"], stats, dtype)

    params = policy.params()
    expected = [tuple(s) for s in header["param_shapes"]]
    if [p.value.shape for p in params] != expected:
        raise CorruptFile("parameter shapes do not match the rebuilt model")
    n_vals = sum(int(np.prod(s)) for s in expected)
    blob_off = 12 + hlen
    blob = data[blob_off:]
    if len(blob) != n_vals * 8:
        raise CorruptFile("truncated parameter blob", offset=blob_off + len(blob))
    flat = np.frombuffer(blob, dtype="<f8")
    pos = 0
    for p in params:
        n = p.value.size
        p.value[...] = flat[pos : pos + n].reshape(p.value.shape).astype(p.value.dtype)
        pos += n
    return policy
