"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"FGRN"  u32 version
    u64 config length, UTF-8 key=value config text
    u64 tensor count
    per tensor: u32 name length, name bytes, u8 dtype code, u8 ndim,
                ndim x u64 dims, raw little-endian values

dtype codes: 0 = float32, 1 = float64. Optimizer moments are stored as
extra tensors under ``adam.m.*`` / ``adam.v.*`` plus the scalar ``adam.t``.
"""
from __future__ import annotations

import os
import struct
from typing import BinaryIO

import numpy as np

from .errors import BadConfig, CorruptFile, VersionMismatch
from .training import AdamState, RescaleModel, TrainConfig

MAGIC = b"FGRN"
VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


def _tensor_record(name: str, arr: np.ndarray) -> bytes:
    dt = arr.dtype.newbyteorder("<")
    if dt not in DTYPE_CODES:
        raise TypeError(f"unsupported dtype {arr.dtype} for {name}")
    raw = name.encode("utf-8")
    head = struct.pack("<I", len(raw)) + raw + struct.pack("<BB", DTYPE_CODES[dt], arr.ndim)
    head += b"".join(struct.pack("<Q", d) for d in arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dt).tobytes()


def checkpoint_save(model: RescaleModel, state: AdamState | None, cfg: TrainConfig | None,
                    path: str | os.PathLike) -> None:
    cfg = cfg or model.config
    tensors = [(name, p.data) for name, p in model.named_parameters()]
    if state is not None:
        names = [name for name, _ in tensors]
        tensors += [(f"adam.m.{n}", m) for n, m in zip(names, state.m)]
        tensors += [(f"adam.v.{n}", v) for n, v in zip(names, state.v)]
        tensors.append(("adam.t", np.asarray(float(state.t))))
    text = cfg.to_text().encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(text)), text,
             struct.pack("<Q", len(tensors))]
    parts += [_tensor_record(n, a) for n, a in tensors]
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CorruptFile("unexpected end of checkpoint")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: str | os.PathLike) -> tuple[str, dict[str, np.ndarray]]:
    """Parse a checkpoint into (config text, name -> array)."""
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != MAGIC:
        raise CorruptFile("bad magic bytes")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    (clen,) = r.unpack("<Q")
    try:
        text = r.take(clen).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFile("config blob is not UTF-8") from exc
    (count,) = r.unpack("<Q")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8", errors="replace")
        code, ndim = r.unpack("<BB")
        if code not in CODE_DTYPES:
            raise CorruptFile(f"unknown dtype code {code} for {name}")
        dims = r.unpack(f"<{ndim}Q") if ndim else ()
        dt = CODE_DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        tensors[name] = np.frombuffer(r.take(nbytes), dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    if r.pos != len(r.buf):
        raise CorruptFile("trailing bytes after last tensor")
    return text, tensors


def checkpoint_load(path: str | os.PathLike, with_state: bool = False):
    """Rebuild the model (and optionally the Adam state) from ``path``."""
    text, tensors = read_checkpoint(path)
    try:
        cfg = TrainConfig.from_text(text)
    except BadConfig as exc:
        raise CorruptFile(f"unreadable config: {exc}") from exc
    model = RescaleModel(cfg)
    named = list(model.named_parameters())
    for name, p in named:
        if name not in tensors:
            raise CorruptFile(f"missing tensor {name}")
        arr = tensors[name]
        if arr.shape != p.shape:
            raise CorruptFile(f"tensor {name} has shape {arr.shape}, expected {p.shape}")
        p.data = arr.astype(p.dtype, copy=False)
    if not with_state:
        return model
    state = None
    if "adam.t" in tensors:
        state = AdamState(
            [tensors[f"adam.m.{n}"] for n, _ in named],
            [tensors[f"adam.v.{n}"] for n, _ in named],
            int(tensors["adam.t"]),
        )
    return model, state
