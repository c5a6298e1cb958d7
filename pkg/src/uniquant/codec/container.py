"""The ``LPCC`` compressed-model container.

Layout, all integers little-endian::

    header   b"LPCC" u8 version, u8 coder, u8 offset_mode, u8 randomize,
             u32 n, f32 delta, u64 seed, u64 N, u8 pad_count, u32 k_VQ,
             u8 mask_present
    template tensor table (u32 count; per tensor u16 name length, name,
             u8 rank, rank x u32 dims)
    codebook k_VQ * n f32 centers, row-major
    mask     (only if mask_present) u32 length + block-compressed bitmap
    payload  u32 length + coder-specific symbol stream
    trailer  u32 crc32 of everything before it

Payloads: the Huffman coder codes cluster ids directly. LZW and the block
coder receive the ids packed MSB-first at ``max(1, ceil(log2 k_VQ))`` bits each.
"""

from __future__ import annotations

import enum
import io
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import ContainerError, DataError
from ..pruner import PruneMask
from ..quantizer import Codebook, QuantConfig, QuantizedModel, check_consistency
from ..weightstore import decode_table, encode_table
from . import blocksort, huffman, lzw
from .bitstream import pack_fixed, unpack_fixed

MAGIC = b"LPCC"
VERSION = 1
_HEADER = struct.Struct("<4sBBBBIfQQBIB")
_U32 = struct.Struct("<I")


class Coder(enum.IntEnum):
    HUFFMAN = 0
    LZW = 1
    BWT = 2

    @classmethod
    def parse(cls, value) -> "Coder":
        if isinstance(value, Coder):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown coder {value!r}; use huffman, lzw or bwt") from None
        try:
            return cls(int(value))
        except ValueError:
            raise ContainerError(f"unknown coder id {value}") from None


def symbol_width(k: int) -> int:
    return max(1, math.ceil(math.log2(k))) if k > 1 else 1


def encode_symbols(symbols, k: int, coder) -> bytes:
    coder = Coder.parse(coder)
    symbols = np.asarray(symbols, dtype=np.int64)
    if coder is Coder.HUFFMAN:
        return huffman.encode_stream(symbols, k)
    packed = pack_fixed(symbols, symbol_width(k))
    if coder is Coder.LZW:
        return lzw.encode_bytes(packed)
    return blocksort.block_compress(packed)


def decode_symbols(payload: bytes, k: int, count: int, coder) -> np.ndarray:
    coder = Coder.parse(coder)
    if coder is Coder.HUFFMAN:
        symbols, used = huffman.decode_stream(payload)
        if used != len(payload) or symbols.size != count:
            raise ContainerError("Huffman payload does not match the header")
        return symbols
    packed = lzw.decode_bytes(payload) if coder is Coder.LZW else blocksort.block_decompress(payload)
    width = symbol_width(k)
    if len(packed) != (width * count + 7) // 8:
        raise ContainerError("symbol payload length does not match the header")
    return unpack_fixed(packed, width, count)


@dataclass(frozen=True)
class CompressedContainer:
    """A packed container split into its accounted sections."""

    header: bytes  # fixed header plus tensor table
    codebook: bytes
    mask: bytes | None
    payload: bytes

    def to_bytes(self) -> bytes:
        body = self.header + self.codebook
        if self.mask is not None:
            body += _U32.pack(len(self.mask)) + self.mask
        body += _U32.pack(len(self.payload)) + self.payload
        return body + _U32.pack(zlib.crc32(body))

    @property
    def bits_header(self) -> int:
        """Header, tensor table, length prefixes and checksum."""
        framing = 4 * (2 if self.mask is not None else 1) + 4
        return 8 * (len(self.header) + framing)

    @property
    def bits_codebook(self) -> int:
        return 8 * len(self.codebook)

    @property
    def bits_mask(self) -> int:
        return 8 * len(self.mask) if self.mask is not None else 0

    @property
    def bits_payload(self) -> int:
        return 8 * len(self.payload)

    @property
    def total_bits(self) -> int:
        return self.bits_header + self.bits_codebook + self.bits_mask + self.bits_payload


def pack_container(qm: QuantizedModel, coder="bwt") -> CompressedContainer:
    coder = Coder.parse(coder)
    check_consistency(qm)
    cfg = qm.config
    if qm.pad_count > 0xFF:
        raise DataError(f"pad count {qm.pad_count} does not fit the container (n too large)")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        int(coder),
        int(cfg.offset_mode),
        int(cfg.randomize),
        cfg.n,
        cfg.delta,
        cfg.seed,
        qm.total_count,
        qm.pad_count,
        qm.codebook.size,
        int(qm.mask is not None),
    )
    table = encode_table(qm.template)
    codebook = qm.codebook.centers.astype("<f4").tobytes()
    mask = blocksort.block_compress(qm.mask.to_bytes()) if qm.mask is not None else None
    payload = encode_symbols(qm.symbols, qm.codebook.size, coder)
    return CompressedContainer(header + table, codebook, mask, payload)


def _take(stream: io.BytesIO, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise ContainerError(f"container truncated in {what}")
    return data


def unpack_container(blob: bytes | CompressedContainer) -> tuple[QuantizedModel, Coder]:
    """Parse a container back into the quantized model it was packed from."""
    if isinstance(blob, CompressedContainer):
        blob = blob.to_bytes()
    blob = bytes(blob)
    if len(blob) < _HEADER.size + 4:
        raise ContainerError("container truncated")
    if blob[:4] != MAGIC:
        raise ContainerError(f"not a compressed container: magic {blob[:4]!r}")
    if blob[4] != VERSION:
        raise ContainerError(f"unsupported container version {blob[4]}")
    body, (crc,) = blob[:-4], _U32.unpack(blob[-4:])
    if zlib.crc32(body) != crc:
        raise ContainerError("container checksum mismatch (corrupt or truncated file)")
    stream = io.BytesIO(body)
    (_, _, coder_id, offset_mode, randomize, n, delta, seed, total, pad, k, mask_present) = _HEADER.unpack(
        _take(stream, _HEADER.size, "header")
    )
    coder = Coder.parse(coder_id)
    try:
        config = QuantConfig(n=n, delta=delta, offset_mode=offset_mode, randomize=bool(randomize), seed=seed)
        template = tuple(decode_table(stream))
    except DataError as exc:
        raise ContainerError(f"corrupt container header: {exc}") from exc
    except ValueError as exc:
        raise ContainerError(f"corrupt container header: {exc}") from exc
    if sum(math.prod(s) for _, s in template) != total:
        raise ContainerError("tensor table does not match the weight count")
    if k < 1:
        raise ContainerError("empty codebook")
    centers = np.frombuffer(_take(stream, 4 * k * n, "codebook"), dtype="<f4").reshape(k, n)
    mask = None
    if mask_present:
        (mlen,) = _U32.unpack(_take(stream, 4, "mask length"))
        try:
            mask = PruneMask.from_bytes(blocksort.block_decompress(_take(stream, mlen, "mask")), total)
        except DataError as exc:
            raise ContainerError(f"corrupt mask: {exc}") from exc
    (plen,) = _U32.unpack(_take(stream, 4, "payload length"))
    payload = _take(stream, plen, "payload")
    if stream.read(1):
        raise ContainerError("trailing bytes after the payload")
    quantized = mask.kept_count if mask is not None else total
    count = -(-quantized // n)
    try:
        symbols = decode_symbols(payload, k, count, coder)
        qm = QuantizedModel(config, symbols, Codebook(centers.astype(np.float32)), pad, template, mask)
        check_consistency(qm)
    except ContainerError:
        raise
    except DataError as exc:
        raise ContainerError(f"corrupt payload: {exc}") from exc
    return qm, coder
