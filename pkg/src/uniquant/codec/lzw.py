"""LZW with variable-width codes.

The dictionary starts with one entry per alphabet symbol (the 256 byte values
by default) and grows by one entry per emitted code until it holds
``MAX_ENTRIES`` entries, after which it is frozen.

Code ``i`` (0-based) is written with just enough bits for the largest value it
can take, ``alphabet + i - 1`` (capped by the frozen dictionary), so encoder
and decoder agree on every width without escape codes.

Serialized form: ``u32 code count`` followed by the packed codes.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

from ..errors import CodecError
from .bitstream import pack_codes

MAX_ENTRIES = 1 << 20


def lzw_encode(data: bytes | Sequence, alphabet: Sequence | None = None) -> list[int]:
    """Classic LZW over bytes, or over an explicit alphabet given as a sequence of symbols."""
    if alphabet is None:
        table = {bytes([i]): i for i in range(256)}
        seq = [bytes([b]) for b in bytes(data)]
        join = bytes.__add__
        empty = b""
    else:
        table = {(a,): i for i, a in enumerate(alphabet)}
        seq = [(c,) for c in data]
        join = tuple.__add__
        empty = ()
    codes = []
    w = empty
    for c in seq:
        if c not in table:
            raise ValueError(f"symbol {c!r} is not in the alphabet")
        wc = join(w, c)
        if wc in table:
            w = wc
            continue
        codes.append(table[w])
        if len(table) < MAX_ENTRIES:
            table[wc] = len(table)
        w = c
    if w:
        codes.append(table[w])
    return codes


def lzw_decode(codes: Sequence[int], alphabet: Sequence | None = None) -> bytes | list:
    if alphabet is None:
        entries: list = [bytes([i]) for i in range(256)]
    else:
        entries = [(a,) for a in alphabet]
    if not codes:
        return b"" if alphabet is None else []
    out = []
    prev = None
    for code in codes:
        code = int(code)
        if 0 <= code < len(entries):
            entry = entries[code]
        elif prev is not None and code == len(entries) and len(entries) < MAX_ENTRIES:
            entry = prev + prev[:1]
        else:
            raise CodecError(f"LZW code {code} is outside the dictionary (size {len(entries)})")
        out.append(entry)
        if prev is not None and len(entries) < MAX_ENTRIES:
            entries.append(prev + entry[:1])
        prev = entry
    if alphabet is None:
        return b"".join(out)
    return [s for e in out for s in e]


def code_widths(count: int, alphabet_size: int = 256) -> np.ndarray:
    i = np.arange(count, dtype=np.int64)
    top = np.minimum(alphabet_size + i - 1, MAX_ENTRIES - 1)
    top[:1] = alphabet_size - 1
    return np.array([max(1, t.bit_length()) for t in top.tolist()], dtype=np.int64)


def encode_bytes(data: bytes) -> bytes:
    codes = lzw_encode(data)
    stream = pack_codes(codes, code_widths(len(codes)))
    return struct.pack("<I", len(codes)) + stream.data


def decode_bytes(blob: bytes) -> bytes:
    if len(blob) < 4:
        raise CodecError("truncated LZW stream")
    (count,) = struct.unpack_from("<I", blob)
    widths = code_widths(count)
    total = int(widths.sum())
    body = blob[4:]
    if 8 * len(body) < total:
        raise CodecError("truncated LZW stream")
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8))[:total].tolist()
    codes = []
    pos = 0
    for w in widths.tolist():
        v = 0
        for b in bits[pos : pos + w]:
            v = (v << 1) | b
        codes.append(v)
        pos += w
    return lzw_decode(codes)
