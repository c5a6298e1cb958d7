"""Model weights: in-memory representation, flattening, and the ``LPWM`` file format.

File layout (all integers little-endian)::

    b"LPWM" | u16 version | u32 tensor count
    per tensor: u16 name length | name (utf-8) | u8 rank | rank x u32 dims
    then every tensor's values as f32, in table order
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BadMagicError, EmptyModelError, ShapeMismatchError, TruncatedError

MAGIC = b"LPWM"
VERSION = 1


@dataclass(frozen=True, eq=False)
class TensorRecord:
    name: str
    shape: tuple[int, ...]
    values: np.ndarray  # flat float32, row-major

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        if any(d < 1 for d in shape):
            raise ShapeMismatchError(f"tensor {self.name!r}: dimensions must be positive, got {shape}")
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32).reshape(-1))
        if int(np.prod(shape, dtype=np.int64)) != values.size:
            raise ShapeMismatchError(
                f"tensor {self.name!r}: shape {shape} holds {int(np.prod(shape))} values, got {values.size}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.size

    def array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, TensorRecord):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass(frozen=True, eq=False)
class ModelWeights:
    tensors: tuple[TensorRecord, ...]
    total_count: int = field(init=False)

    def __post_init__(self):
        tensors = tuple(self.tensors)
        if not tensors:
            raise EmptyModelError("empty model")
        names = [t.name for t in tensors]
        if len(set(names)) != len(names):
            raise ShapeMismatchError(f"duplicate tensor names in {names}")
        object.__setattr__(self, "tensors", tensors)
        object.__setattr__(self, "total_count", sum(t.size for t in tensors))

    @classmethod
    def from_arrays(cls, items: Iterable[tuple[str, np.ndarray]]) -> "ModelWeights":
        recs = []
        for name, arr in items:
            arr = np.asarray(arr, dtype=np.float32)
            recs.append(TensorRecord(name, arr.shape if arr.ndim else (1,), arr.reshape(-1)))
        return cls(tuple(recs))

    def __eq__(self, other):
        if not isinstance(other, ModelWeights):
            return NotImplemented
        return self.tensors == other.tensors

    def __getitem__(self, name: str) -> TensorRecord:
        for t in self.tensors:
            if t.name == name:
                return t
        raise KeyError(name)

    def names(self) -> list[str]:
        return [t.name for t in self.tensors]


def flatten(model: ModelWeights) -> np.ndarray:
    """Concatenate all tensors in stored order, row-major within each tensor."""
    return np.concatenate([t.values for t in model.tensors]).astype(np.float32, copy=False)


def scatter(template: ModelWeights, flat: Sequence[float]) -> ModelWeights:
    """Inverse of :func:`flatten`: split ``flat`` back into the template's tensors."""
    flat = np.asarray(flat, dtype=np.float32).reshape(-1)
    if flat.size != template.total_count:
        raise ShapeMismatchError(
            f"flat vector has {flat.size} values, template expects {template.total_count}"
        )
    out = []
    pos = 0
    for t in template.tensors:
        out.append(TensorRecord(t.name, t.shape, flat[pos : pos + t.size].copy()))
        pos += t.size
    return ModelWeights(tuple(out))


def table_of(model: ModelWeights) -> tuple[tuple[str, tuple[int, ...]], ...]:
    return tuple((t.name, t.shape) for t in model.tensors)


def encode_table(table) -> bytes:
    """Serialize a tensor table (names and shapes, no values).

    ``table`` is a :class:`ModelWeights` or a sequence of ``(name, shape)`` pairs.
    """
    if isinstance(table, ModelWeights):
        table = table_of(table)
    buf = bytearray(struct.pack("<I", len(table)))
    for name, shape in table:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ShapeMismatchError(f"tensor name too long: {name[:40]}...")
        if len(shape) > 0xFF:
            raise ShapeMismatchError(f"tensor {name!r} has rank {len(shape)} > 255")
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<B", len(shape))
        buf += struct.pack(f"<{len(shape)}I", *shape)
    return bytes(buf)


def _read(stream: io.BufferedIOBase, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise TruncatedError(f"truncated while reading {what}: wanted {n} bytes, got {len(data)}")
    return data


def decode_table(stream) -> list[tuple[str, tuple[int, ...]]]:
    """Read a tensor table written by :func:`encode_table` from a binary stream."""
    (count,) = struct.unpack("<I", _read(stream, 4, "tensor count"))
    if count == 0:
        raise EmptyModelError("empty model")
    table = []
    for i in range(count):
        (name_len,) = struct.unpack("<H", _read(stream, 2, f"name length of tensor {i}"))
        try:
            name = _read(stream, name_len, f"name of tensor {i}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ShapeMismatchError(f"tensor {i}: name is not valid utf-8") from exc
        (rank,) = struct.unpack("<B", _read(stream, 1, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", _read(stream, 4 * rank, f"dims of {name!r}"))
        if rank == 0 or any(d == 0 for d in dims):
            raise ShapeMismatchError(f"tensor {name!r}: invalid shape {dims}")
        table.append((name, tuple(dims)))
    return table


def dumps(model: ModelWeights) -> bytes:
    head = MAGIC + struct.pack("<H", VERSION) + encode_table(model)
    return head + flatten(model).astype("<f4").tobytes()


def loads(data: bytes) -> ModelWeights:
    stream = io.BytesIO(data)
    magic = stream.read(4)
    if magic != MAGIC:
        raise BadMagicError(f"not a model file: magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<H", _read(stream, 2, "version"))
    if version != VERSION:
        raise BadMagicError(f"unsupported model file version {version}")
    table = decode_table(stream)
    tensors = []
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        raw = _read(stream, 4 * size, f"values of {name!r}")
        tensors.append(TensorRecord(name, shape, np.frombuffer(raw, dtype="<f4").astype(np.float32)))
    if stream.read(1):
        raise ShapeMismatchError("trailing bytes after the last tensor: declared shapes do not match payload")
    return ModelWeights(tuple(tensors))


def load_model(path: str | os.PathLike) -> ModelWeights:
    with open(path, "rb") as fh:  # FileNotFoundError propagates as-is
        return loads(fh.read())


def save_model(model: ModelWeights, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))
