"""bzip2-style block compressor: BWT, move-to-front, zero-run coding, Huffman.

Stream layout (little-endian)::

    u32 total length | u32 block count
    per block: u32 length | u32 crc32 | u32 primary index | u32 coded size | Huffman stream

The Huffman stream (see :mod:`.huffman`) codes an alphabet of 258 symbols:
0 and 1 are the RUNA/RUNB digits of a zero run written in bijective base 2
(least significant digit first), ``v + 1`` stands for a non-zero MTF index
``v``, and 257 ends the block.
"""

from __future__ import annotations

import struct
import zlib
from typing import Sequence

import numpy as np

from ..errors import CodecError
from . import huffman

BLOCK_SIZE = 900 * 1024
RUNA, RUNB, EOB = 0, 1, 257
ALPHABET = 258


def bwt_forward(block: bytes) -> tuple[bytes, int]:
    """Last column of the sorted cyclic rotations and the row of the original string."""
    n = len(block)
    if n > BLOCK_SIZE:
        raise ValueError(f"block of {n} bytes exceeds the {BLOCK_SIZE}-byte block size")
    if n == 0:
        return b"", 0
    data = np.frombuffer(bytes(block), dtype=np.uint8).astype(np.int64)
    idx = np.arange(n, dtype=np.int64)
    rank = data.copy()
    k = 1
    while k < n:
        second = rank[(idx + k) % n]
        order = np.lexsort((second, rank))
        r1, r2 = rank[order], second[order]
        step = np.empty(n, dtype=np.int64)
        step[0] = 0
        step[1:] = (r1[1:] != r1[:-1]) | (r2[1:] != r2[:-1])
        new_rank = np.empty(n, dtype=np.int64)
        new_rank[order] = np.cumsum(step)
        rank = new_rank
        if rank.max() == n - 1:
            break
        k *= 2
    order = np.argsort(rank, kind="stable")
    last = data[(order - 1) % n].astype(np.uint8).tobytes()
    primary = int(np.flatnonzero(order == 0)[0])
    return last, primary


def bwt_inverse(last: bytes, primary: int) -> bytes:
    n = len(last)
    if n == 0:
        if primary != 0:
            raise CodecError("primary index out of range for an empty block")
        return b""
    if not (0 <= primary < n):
        raise CodecError(f"primary index {primary} out of range for a block of {n} bytes")
    col = np.frombuffer(bytes(last), dtype=np.uint8)
    nxt = np.argsort(col, kind="stable").tolist()
    col_l = col.tolist()
    out = bytearray(n)
    p = nxt[primary]
    for i in range(n):
        out[i] = col_l[p]
        p = nxt[p]
    return bytes(out)


def mtf_encode(data: Sequence, alphabet: Sequence | None = None) -> list[int]:
    table = list(range(256)) if alphabet is None else list(alphabet)
    out = []
    for c in data:
        i = table.index(c)
        out.append(i)
        if i:
            del table[i]
            table.insert(0, c)
    return out


def mtf_decode(indices: Sequence[int], alphabet: Sequence | None = None) -> bytes | list:
    table = list(range(256)) if alphabet is None else list(alphabet)
    out = []
    for i in indices:
        c = table[i]
        out.append(c)
        if i:
            del table[i]
            table.insert(0, c)
    return bytes(out) if alphabet is None else out


def zero_run_encode(indices: Sequence[int]) -> list[int]:
    """Replace runs of zeros by RUNA/RUNB digits; shift other values up by one; append EOB."""
    out = []
    run = 0
    for v in indices:
        if v == 0:
            run += 1
            continue
        if run:
            out.extend(_run_digits(run))
            run = 0
        out.append(v + 1)
    if run:
        out.extend(_run_digits(run))
    out.append(EOB)
    return out


def _run_digits(run: int) -> list[int]:
    digits = []
    while run > 0:
        if run & 1:
            digits.append(RUNA)
            run = (run - 1) >> 1
        else:
            digits.append(RUNB)
            run = (run - 2) >> 1
    return digits


def zero_run_decode(symbols: Sequence[int]) -> list[int]:
    out: list[int] = []
    run = 0
    weight = 1
    ended = False
    for s in symbols:
        if ended:
            raise CodecError("symbols after end-of-block")
        if s in (RUNA, RUNB):
            run += weight * (1 if s == RUNA else 2)
            weight <<= 1
            if run > BLOCK_SIZE:
                raise CodecError("zero run longer than a block")
            continue
        if run:
            out.extend([0] * run)
            run, weight = 0, 1
        if s == EOB:
            ended = True
        elif 2 <= s <= 256:
            out.append(s - 1)
        else:
            raise CodecError(f"invalid run-coded symbol {s}")
    if not ended:
        raise CodecError("missing end-of-block symbol")
    return out


_STREAM = struct.Struct("<II")
_BLOCK = struct.Struct("<IIII")


def _compress_block(block: bytes) -> bytes:
    last, primary = bwt_forward(block)
    coded = huffman.encode_stream(zero_run_encode(mtf_encode(last)), ALPHABET)
    return _BLOCK.pack(len(block), zlib.crc32(block), primary, len(coded)) + coded


def block_compress(data: bytes, block_size: int = BLOCK_SIZE) -> bytes:
    data = bytes(data)
    blocks = [data[i : i + block_size] for i in range(0, len(data), block_size)]
    return _STREAM.pack(len(data), len(blocks)) + b"".join(_compress_block(b) for b in blocks)


def block_decompress(blob: bytes) -> bytes:
    blob = bytes(blob)
    if len(blob) < _STREAM.size:
        raise CodecError("truncated block stream header")
    total, count = _STREAM.unpack_from(blob)
    pos = _STREAM.size
    out = []
    for b in range(count):
        if len(blob) < pos + _BLOCK.size:
            raise CodecError(f"truncated header of block {b}")
        length, crc, primary, coded_len = _BLOCK.unpack_from(blob, pos)
        pos += _BLOCK.size
        if length > BLOCK_SIZE or len(blob) < pos + coded_len:
            raise CodecError(f"block {b} is corrupt or truncated")
        symbols, used = huffman.decode_stream(blob[pos : pos + coded_len])
        if used != coded_len:
            raise CodecError(f"block {b}: coded size mismatch")
        pos += coded_len
        try:
            last = mtf_decode(zero_run_decode(symbols.tolist()))
        except IndexError:
            raise CodecError(f"block {b}: move-to-front index out of range") from None
        if len(last) != length:
            raise CodecError(f"block {b}: decoded {len(last)} bytes, header says {length}")
        block = bwt_inverse(last, primary)
        if zlib.crc32(block) != crc:
            raise CodecError(f"block {b}: checksum mismatch")
        out.append(block)
    if pos != len(blob):
        raise CodecError("trailing bytes after the last block")
    data = b"".join(out)
    if len(data) != total:
        raise CodecError(f"stream decoded to {len(data)} bytes, header says {total}")
    return data
