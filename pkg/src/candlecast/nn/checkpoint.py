"""Binary weight checkpoints (``CFW1``) and tensor dumps (``CFT1``).

All integers are 64-bit little-endian unsigned, all values 32-bit
little-endian floats.

CFW1::

    magic 'CFW1' | count | count x (name_len | name utf-8 | rank | dims... | floats)

CFT1::

    magic 'CFT1' | rank | dims... | floats
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

WEIGHTS_MAGIC = b"CFW1"
TENSOR_MAGIC = b"CFT1"
_U64 = struct.Struct("<Q")
_F32 = np.dtype("<f4")


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data, self.pos, self.what = data, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.what}: truncated at byte {self.pos} (wanted {n} more)")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def array(self) -> np.ndarray:
        rank = self.u64()
        if rank > 8:
            raise CheckpointError(f"{self.what}: implausible rank {rank}")
        dims = tuple(self.u64() for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        return np.frombuffer(self.take(4 * count), dtype=_F32).reshape(dims).astype(np.float32)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CheckpointError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _array_bytes(a: np.ndarray) -> bytes:
    return _U64.pack(a.ndim) + b"".join(_U64.pack(d) for d in a.shape) + np.ascontiguousarray(a, dtype=_F32).tobytes()


def _atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def encode_weights(params: dict[str, np.ndarray]) -> bytes:
    parts = [WEIGHTS_MAGIC, _U64.pack(len(params))]
    for name, val in params.items():
        raw = name.encode("utf-8")
        parts += [_U64.pack(len(raw)), raw, _array_bytes(val)]
    return b"".join(parts)


def decode_weights(data: bytes, what: str = "checkpoint") -> dict[str, np.ndarray]:
    r = _Reader(data, what)
    if r.take(4) != WEIGHTS_MAGIC:
        raise CheckpointError(f"{what}: not a CFW1 weights file")
    out = {}
    for _ in range(r.u64()):
        name = r.take(r.u64()).decode("utf-8")
        out[name] = r.array()
    r.done()
    return out


def save_weights(network, path: str | Path) -> None:
    _atomic_write(Path(path), encode_weights(network.named_params()))


def load_weights(network, path: str | Path) -> None:
    """Load into ``network``; nothing is modified unless every tensor fits."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from None
    params = decode_weights(data, str(path))
    own = network.named_params()
    if set(params) != set(own):
        raise CheckpointError(f"{path}: parameter names do not match the network: {sorted(set(params) ^ set(own))}")
    for k, v in params.items():
        if v.shape != own[k].shape:
            raise CheckpointError(f"{path}: {k} has shape {v.shape}, network expects {own[k].shape}")
    network.set_params(params)


def encode_tensor(a: np.ndarray) -> bytes:
    return TENSOR_MAGIC + _array_bytes(a)


def decode_tensor(data: bytes) -> np.ndarray:
    r = _Reader(data, "tensor dump")
    if r.take(4) != TENSOR_MAGIC:
        raise CheckpointError("not a CFT1 tensor dump")
    a = r.array()
    r.done()
    return a


def save_tensor(a: np.ndarray, path: str | Path) -> None:
    _atomic_write(Path(path), encode_tensor(a))


def load_tensor(path: str | Path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())
