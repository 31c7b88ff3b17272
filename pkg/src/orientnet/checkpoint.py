"""Binary checkpoint files.

Layout (little-endian, no padding)::

    b"ONCK"  u32 version=1
    u32 len  JSON network config (UTF-8)
    u32 tensor count
    per tensor: u16 len + UTF-8 name, u8 rank, u32 extents..., float32 data
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import NetworkConfig
from .errors import ConfigMismatchError, FormatError

MAGIC = b"ONCK"
VERSION = 1
_LE_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    version: int
    config: NetworkConfig
    config_json: str
    tensors: dict


def encode_checkpoint(params: dict, config: NetworkConfig) -> bytes:
    echo = config.to_json().encode("utf-8")
    expected = config.param_shapes()
    parts = [MAGIC, struct.pack("<II", VERSION, len(echo)), echo, struct.pack("<I", len(expected))]
    for name, shape in expected:
        t = np.asarray(params[name])
        if t.shape != shape:
            raise ConfigMismatchError(f"tensor {name} has shape {t.shape}, config expects {shape}")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{len(shape)}I", len(shape), *shape))
        parts.append(t.astype(_LE_F32, copy=False).tobytes(order="C"))
    return b"".join(parts)


def save_checkpoint(params: dict, config: NetworkConfig, path) -> None:
    path = Path(path)
    data = encode_checkpoint(params, config)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated file: need {n} bytes for {what} at offset {self.pos}, "
                              f"only {len(self.buf) - self.pos} left")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic at offset 0")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    (echo_len,) = r.unpack("<I", "config length")
    at = r.pos
    try:
        echo = r.take(echo_len, "config echo").decode("utf-8")
        config = NetworkConfig.from_json(echo)
    except FormatError:
        raise
    except Exception as e:
        raise FormatError(f"invalid config echo at offset {at}: {e}") from None
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        at = r.pos
        try:
            name = r.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"invalid tensor name at offset {at}") from None
        (rank,) = r.unpack("<B", "rank")
        shape = r.unpack(f"<{rank}I", f"extents of {name}")
        n = int(np.prod(shape, dtype=np.int64))
        data = r.take(4 * n, f"data of {name}")
        tensors[name] = np.frombuffer(data, dtype=_LE_F32).astype(np.float32).reshape(shape)
    if r.pos != len(buf):
        raise FormatError(f"trailing bytes at offset {r.pos}")
    return Checkpoint(version, config, echo, tensors)


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def load_params(path, config: NetworkConfig | None = None) -> tuple[NetworkConfig, dict]:
    """Load ``(config, params)``; if ``config`` is given the echo must match it exactly."""
    ckpt = load_checkpoint(path)
    if config is not None and ckpt.config != config:
        raise ConfigMismatchError(f"checkpoint config {ckpt.config.name!r} does not match network {config.name!r}")
    missing = [n for n, _ in ckpt.config.param_shapes() if n not in ckpt.tensors]
    if missing:
        raise FormatError(f"checkpoint lacks tensors {missing}")
    params = {n: ckpt.tensors[n].copy() for n, _ in ckpt.config.param_shapes()}
    return ckpt.config, params
