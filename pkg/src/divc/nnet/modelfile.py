"""Model file: ``DIVM`` magic, architecture descriptor, float32 weights, FNV-1a hash."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..prior import PARAM_NAMES, FactorizedPrior
from .network import Architecture, Model

MODEL_MAGIC = b"DIVM"
MODEL_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class ModelFileError(ValueError):
    pass


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _arrays(model: Model):
    for name in model.arch.param_shapes():
        yield name, model.params[name]
    for name in PARAM_NAMES:
        yield "prior." + name, model.prior.params[name]


def model_to_bytes(model: Model) -> bytes:
    arch = model.arch
    if model.latent_range is None:
        raise ModelFileError("model has no latent range; finalize it after training")
    out = bytearray(MODEL_MAGIC)
    out += struct.pack("<BHBHH", MODEL_VERSION, arch.block_size, arch.n_layers, arch.latent_channels, arch.head_width)
    out += struct.pack("<B", len(arch.widths)) + struct.pack(f"<{len(arch.widths)}H", *arch.widths)
    arrays = list(_arrays(model))
    out += struct.pack("<H", len(arrays))
    for name, arr in arrays:
        raw = name.encode("ascii")
        out += struct.pack("<B", len(raw)) + raw + struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}H", *arr.shape)
    for _, arr in arrays:
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    out += np.ascontiguousarray(model.latent_range, dtype="<i4").tobytes()
    meta = model.meta
    out += struct.pack("<dII", meta.get("lam", 0.0), meta.get("steps", 0), meta.get("seed", 0))
    out += struct.pack("<Q", fnv1a64(bytes(out)))
    return bytes(out)


def model_from_bytes(data: bytes) -> Model:
    if len(data) < 16 or data[:4] != MODEL_MAGIC:
        raise ModelFileError("not a model file (bad magic)")
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if fnv1a64(body) != stored:
        raise ModelFileError("model file hash mismatch (corrupted file)")
    pos = 4
    version, k, n_layers, c, head = struct.unpack_from("<BHBHH", data, pos)
    pos += struct.calcsize("<BHBHH")
    if version != MODEL_VERSION:
        raise ModelFileError(f"unsupported model version {version}")
    (nw,) = struct.unpack_from("<B", data, pos)
    pos += 1
    widths = struct.unpack_from(f"<{nw}H", data, pos)
    pos += 2 * nw
    arch = Architecture(block_size=k, n_layers=n_layers, latent_channels=c, widths=tuple(widths), head_width=head)
    (count,) = struct.unpack_from("<H", data, pos)
    pos += 2
    specs = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<B", data, pos)
        name = data[pos + 1:pos + 1 + ln].decode("ascii")
        pos += 1 + ln
        (nd,) = struct.unpack_from("<B", data, pos)
        shape = struct.unpack_from(f"<{nd}H", data, pos + 1)
        pos += 1 + 2 * nd
        specs.append((name, shape))
    params, prior = {}, {}
    for name, shape in specs:
        n = int(np.prod(shape))
        arr = np.frombuffer(data, "<f4", n, pos).reshape(shape).astype(np.float64)
        pos += 4 * n
        if name.startswith("prior."):
            prior[name[6:]] = arr
        else:
            params[name] = arr
    expected = arch.param_shapes()
    if set(params) != set(expected) or any(params[n].shape != tuple(s) for n, s in expected.items()):
        raise ModelFileError("weights do not match the architecture descriptor")
    latent_range = np.frombuffer(data, "<i4", 2 * c, pos).reshape(c, 2).astype(np.int64)
    pos += 8 * c
    lam, steps, seed = struct.unpack_from("<dII", data, pos)
    return Model(arch, params, FactorizedPrior(prior), latent_range, dict(lam=lam, steps=steps, seed=seed))


def model_hash(model: Model) -> int:
    return struct.unpack("<Q", model_to_bytes(model)[-8:])[0]


def save_model(path, model: Model) -> int:
    data = model_to_bytes(model)
    Path(path).write_bytes(data)
    return struct.unpack("<Q", data[-8:])[0]


def load_model(path) -> Model:
    return model_from_bytes(Path(path).read_bytes())
