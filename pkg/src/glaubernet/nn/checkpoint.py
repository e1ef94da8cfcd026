"""Checkpoint files: model parameters plus (optionally) optimizer moments.

Header carries the architecture descriptor and run counters; tensors follow
as raw little-endian arrays.  Saving then loading reproduces the model
bit-for-bit, which the training-resume guarantee relies on.
"""

from __future__ import annotations

import io
import json
import struct
from typing import Optional

import numpy as np

from ..textheader import FormatError, read_block, sha256_hex, write_block
from .model import Model
from .optim import Adam

_FORMAT = "glaubernet-checkpoint"
_VERSION = 1
_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


def _write_tensor(buf: io.BytesIO, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    code = "f8" if arr.dtype == np.float64 else "f4"
    buf.write(code.encode("ascii"))
    buf.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        buf.write(struct.pack("<I", d))
    buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _read_tensor(buf: io.BytesIO):
    head = buf.read(2)
    if len(head) != 2:
        raise FormatError("truncated tensor record")
    (ln,) = struct.unpack("<H", head)
    name = buf.read(ln).decode("utf-8")
    code = buf.read(2).decode("ascii")
    if code not in _DTYPES:
        raise FormatError(f"unknown tensor dtype {code!r}")
    (ndim,) = struct.unpack("<B", buf.read(1))
    shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
    dt = _DTYPES[code]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    raw = buf.read(nbytes)
    if len(raw) != nbytes:
        raise FormatError("truncated tensor payload")
    return name, np.frombuffer(raw, dtype=dt).reshape(shape).copy()


def save_checkpoint(path, model: Model, optimizer: Optional[Adam] = None,
                    epoch: int = 0) -> None:
    params = model.params()
    buf = io.BytesIO()
    names = sorted(params)
    tensors = [(n, params[n]) for n in names]
    if optimizer is not None:
        tensors += [(f"adam.m.{n}", optimizer.m[n]) for n in names if n in optimizer.m]
        tensors += [(f"adam.v.{n}", optimizer.v[n]) for n in names if n in optimizer.v]
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        _write_tensor(buf, name, arr)
    payload = buf.getvalue()

    fields = {
        "architecture": json.dumps(model.architecture, separators=(",", ":")),
        "L": model.L, "M": model.M, "K": model.K, "seed": model.seed,
        "dtype": "f8" if model.dtype == np.float64 else "f4",
        "epoch": epoch,
        "step": 0 if optimizer is None else optimizer.t,
        "optimizer": "none" if optimizer is None else
                     f"adam {optimizer.lr!r} {optimizer.beta1!r} "
                     f"{optimizer.beta2!r} {optimizer.eps!r}",
        "checksum": sha256_hex(payload),
    }
    with open(path, "wb") as fh:
        write_block(fh, _FORMAT, _VERSION, fields)
        fh.write(payload)


def load_checkpoint(path) -> tuple[Model, Optional[Adam], dict]:
    """Rebuild (model, optimizer-or-None, meta) from a checkpoint file."""
    with open(path, "rb") as fh:
        fields = read_block(fh, _FORMAT, _VERSION)
        payload = fh.read()
    if sha256_hex(payload) != fields.get("checksum"):
        raise FormatError(f"checksum mismatch in {path}")

    buf = io.BytesIO(payload)
    (count,) = struct.unpack("<I", buf.read(4))
    tensors = dict(_read_tensor(buf) for _ in range(count))
    if buf.read(1):
        raise FormatError(f"trailing bytes in {path}")

    model = Model(L=int(fields["L"]), M=int(fields["M"]),
                  architecture=json.loads(fields["architecture"]),
                  seed=int(fields["seed"]),
                  dtype=_DTYPES[fields["dtype"]])
    params = {n: t for n, t in tensors.items() if not n.startswith("adam.")}
    model.set_params(params)

    optimizer = None
    if fields["optimizer"] != "none":
        kind, lr, b1, b2, eps = fields["optimizer"].split(" ")
        if kind != "adam":
            raise FormatError(f"unknown optimizer {kind!r}")
        optimizer = Adam(lr=float(lr), beta1=float(b1), beta2=float(b2),
                         eps=float(eps))
        optimizer.t = int(fields["step"])
        for n in params:
            m = tensors.get(f"adam.m.{n}")
            v = tensors.get(f"adam.v.{n}")
            if m is None or v is None:
                raise FormatError(f"missing optimizer moments for {n}")
            optimizer.m[n] = m
            optimizer.v[n] = v
            optimizer._scratch[n] = np.empty_like(m)

    meta = {"epoch": int(fields["epoch"]), "step": int(fields["step"])}
    return model, optimizer, meta
