"""MSB-first bit packing helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CodecError


@dataclass(frozen=True)
class BitStream:
    data: bytes
    bit_length: int

    def __post_init__(self):
        if not (0 <= self.bit_length <= 8 * len(self.data)):
            raise CodecError(f"bit length {self.bit_length} does not fit in {len(self.data)} bytes")


def pack_codes(codes, lengths) -> BitStream:
    """Concatenate variable-length codes (MSB first) into a byte string.

    ``codes[i]`` contributes its low ``lengths[i]`` bits. The final partial
    byte is zero padded.
    """
    codes = np.asarray(codes, dtype=np.uint64).reshape(-1)
    lengths = np.asarray(lengths, dtype=np.int64).reshape(-1)
    if codes.size != lengths.size:
        raise ValueError("codes and lengths differ in size")
    if lengths.size and (lengths.min() < 0 or lengths.max() > 64):
        raise ValueError("code lengths must lie in [0, 64]")
    total = int(lengths.sum())
    if total == 0:
        return BitStream(b"", 0)
    starts = np.cumsum(lengths) - lengths
    rep_len = np.repeat(lengths, lengths)
    offset = np.arange(total, dtype=np.int64) - np.repeat(starts, lengths)
    shift = (rep_len - 1 - offset).astype(np.uint64)
    bits = (np.repeat(codes, lengths) >> shift) & np.uint64(1)
    return BitStream(np.packbits(bits.astype(np.uint8)).tobytes(), total)


def pack_fixed(values, width: int) -> bytes:
    """Fixed-width big-endian bit packing of non-negative integers."""
    values = np.asarray(values, dtype=np.uint64).reshape(-1)
    if width < 1:
        raise ValueError("width must be >= 1")
    if values.size and int(values.max()) >= (1 << width):
        raise ValueError(f"value {int(values.max())} does not fit in {width} bits")
    return pack_codes(values, np.full(values.size, width)).data


def unpack_fixed(data: bytes, width: int, count: int) -> np.ndarray:
    if width < 1:
        raise ValueError("width must be >= 1")
    need = (width * count + 7) // 8
    if len(data) < need:
        raise CodecError(f"need {need} bytes for {count} {width}-bit values, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=width * count)
    bits = bits.reshape(count, width).astype(np.uint64)
    weights = np.uint64(1) << np.arange(width - 1, -1, -1, dtype=np.uint64)
    return (bits * weights).sum(axis=1).astype(np.int64) if count else np.zeros(0, dtype=np.int64)


class BitReader:
    """Sequential MSB-first reader over a byte string."""

    def __init__(self, data: bytes, bit_length: int | None = None):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if bit_length is not None:
            if bit_length > self._bits.size:
                raise CodecError(f"stream holds {self._bits.size} bits, {bit_length} declared")
            self._bits = self._bits[:bit_length]
        self._list = self._bits.tolist()
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self._list) - self.pos

    def read_bit(self) -> int:
        if self.pos >= len(self._list):
            raise CodecError("unexpected end of bit stream")
        b = self._list[self.pos]
        self.pos += 1
        return b

    def read(self, width: int) -> int:
        if self.pos + width > len(self._list):
            raise CodecError("unexpected end of bit stream")
        value = 0
        for b in self._list[self.pos : self.pos + width]:
            value = (value << 1) | b
        self.pos += width
        return value
