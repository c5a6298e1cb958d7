"""Canonical Huffman coding over an integer alphabet.

Serialized form written by :func:`encode_stream`::

    u32 alphabet size | u32 symbol count | u8 length width w
    alphabet size x w-bit code lengths (0 = symbol unused) | code bits

Bit fields are MSB first and the table and the code bits are each padded to a
byte boundary.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import CodecError
from .bitstream import BitStream, pack_codes, pack_fixed, unpack_fixed

_LUT_MAX_BITS = 16


def code_lengths(freqs) -> np.ndarray:
    """Optimal prefix-code lengths for the given symbol frequencies.

    Ties are broken by (frequency, symbol id), with leaves ordered before any
    merged node of equal weight. A lone used symbol gets a 1-bit code.
    """
    freqs = np.asarray(freqs, dtype=np.int64).reshape(-1)
    lengths = np.zeros(freqs.size, dtype=np.int64)
    used = np.flatnonzero(freqs > 0)
    if used.size == 0:
        return lengths
    if used.size == 1:
        lengths[used[0]] = 1
        return lengths
    heap = [(int(freqs[s]), int(s), int(s)) for s in used]
    heapq.heapify(heap)
    parent: dict[int, int] = {}
    next_node = freqs.size
    while len(heap) > 1:
        f1, _, a = heapq.heappop(heap)
        f2, _, b = heapq.heappop(heap)
        parent[a] = parent[b] = next_node
        heapq.heappush(heap, (f1 + f2, next_node, next_node))
        next_node += 1
    depth: dict[int, int] = {heap[0][2]: 0}
    for node in range(next_node - 1, freqs.size - 1, -1):
        if node in parent:
            depth[node] = depth[parent[node]] + 1
    for s in used:
        lengths[s] = depth[parent[int(s)]] + 1
    return lengths


def canonical_codes(lengths) -> np.ndarray:
    """Canonical code values: symbols sorted by (length, id) receive consecutive codes."""
    lengths = np.asarray(lengths, dtype=np.int64)
    codes = np.zeros(lengths.size, dtype=np.uint64)
    order = np.lexsort((np.arange(lengths.size), lengths))
    code = 0
    prev = 0
    for s in order:
        ln = int(lengths[s])
        if ln == 0:
            continue
        code <<= ln - prev
        codes[s] = code
        code += 1
        prev = ln
    return codes


@dataclass(frozen=True, eq=False)
class HuffmanTable:
    lengths: np.ndarray

    @property
    def alphabet_size(self) -> int:
        return self.lengths.size

    @property
    def codes(self) -> np.ndarray:
        return canonical_codes(self.lengths)

    def kraft_sum(self) -> float:
        used = self.lengths[self.lengths > 0]
        return float(np.sum(2.0 ** -used.astype(np.float64)))

    def __eq__(self, other):
        return isinstance(other, HuffmanTable) and np.array_equal(self.lengths, other.lengths)


def _check_symbols(symbols, alphabet_size: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if alphabet_size < 1:
        raise ValueError("alphabet must hold at least one symbol")
    if symbols.size and (symbols.min() < 0 or symbols.max() >= alphabet_size):
        raise ValueError(f"symbol out of range [0, {alphabet_size})")
    return symbols


def huffman_encode(symbols, alphabet_size: int) -> tuple[HuffmanTable, BitStream]:
    symbols = _check_symbols(symbols, alphabet_size)
    if symbols.size == 0:
        raise ValueError("cannot Huffman-code an empty stream")
    freqs = np.bincount(symbols, minlength=alphabet_size)
    table = HuffmanTable(code_lengths(freqs))
    codes = table.codes
    return table, pack_codes(codes[symbols], table.lengths[symbols])


def _validate_table(lengths: np.ndarray) -> None:
    used = lengths[lengths > 0]
    if used.size == 0:
        raise CodecError("Huffman table has no symbols")
    if used.max() > 63:
        raise CodecError("Huffman code length exceeds 63 bits")
    # Kraft inequality in exact integer arithmetic
    top = int(used.max())
    if sum(1 << (top - int(x)) for x in used) > (1 << top):
        raise CodecError("Huffman code lengths violate the Kraft inequality")


def huffman_decode(table: HuffmanTable, stream: BitStream, count: int) -> np.ndarray:
    lengths = np.asarray(table.lengths, dtype=np.int64)
    _validate_table(lengths)
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    codes = canonical_codes(lengths)
    max_len = int(lengths.max())
    bits = np.unpackbits(np.frombuffer(stream.data, dtype=np.uint8))[: stream.bit_length]
    if max_len <= _LUT_MAX_BITS:
        return _decode_lut(bits, lengths, codes, max_len, count)
    return _decode_bitwise(bits, lengths, codes, count)


def _decode_lut(bits, lengths, codes, max_len, count) -> np.ndarray:
    lut_sym = np.full(1 << max_len, -1, dtype=np.int64)
    lut_len = np.zeros(1 << max_len, dtype=np.int64)
    for s in np.flatnonzero(lengths):
        ln = int(lengths[s])
        lo = int(codes[s]) << (max_len - ln)
        lut_sym[lo : lo + (1 << (max_len - ln))] = s
        lut_len[lo : lo + (1 << (max_len - ln))] = ln
    nbits = bits.size
    padded = np.concatenate([bits, np.zeros(max_len, dtype=np.uint8)]).astype(np.int64)
    window = np.zeros(nbits, dtype=np.int64)
    for i in range(max_len):
        window = (window << 1) | padded[i : i + nbits]
    window = window.tolist()
    sym_l = lut_sym.tolist()
    len_l = lut_len.tolist()
    out = [0] * count
    pos = 0
    for i in range(count):
        if pos >= nbits:
            raise CodecError("Huffman stream ended early")
        w = window[pos]
        s = sym_l[w]
        if s < 0:
            raise CodecError("invalid Huffman code in stream")
        out[i] = s
        pos += len_l[w]
    if pos > nbits:
        raise CodecError("Huffman stream ended inside a code")
    return np.asarray(out, dtype=np.int64)


def _decode_bitwise(bits, lengths, codes, count) -> np.ndarray:
    lookup = {(int(lengths[s]), int(codes[s])): int(s) for s in np.flatnonzero(lengths)}
    max_len = int(lengths.max())
    bit_list = bits.tolist()
    out = []
    pos = 0
    for _ in range(count):
        code = 0
        ln = 0
        while True:
            if pos >= len(bit_list) or ln >= max_len:
                raise CodecError("invalid or truncated Huffman stream")
            code = (code << 1) | bit_list[pos]
            pos += 1
            ln += 1
            s = lookup.get((ln, code))
            if s is not None:
                out.append(s)
                break
    return np.asarray(out, dtype=np.int64)


_HEAD = struct.Struct("<IIB")


def encode_stream(symbols, alphabet_size: int) -> bytes:
    """Self-delimiting serialization: table header plus code bits."""
    symbols = _check_symbols(symbols, alphabet_size)
    if symbols.size == 0:
        return _HEAD.pack(alphabet_size, 0, 0)
    table, stream = huffman_encode(symbols, alphabet_size)
    width = max(1, int(table.lengths.max()).bit_length())
    return _HEAD.pack(alphabet_size, symbols.size, width) + pack_fixed(table.lengths, width) + stream.data


def decode_stream(data: bytes) -> tuple[np.ndarray, int]:
    """Inverse of :func:`encode_stream`; returns the symbols and bytes consumed."""
    if len(data) < _HEAD.size:
        raise CodecError("truncated Huffman header")
    alphabet_size, count, width = _HEAD.unpack_from(data)
    if count == 0:
        return np.zeros(0, dtype=np.int64), _HEAD.size
    if alphabet_size < 1 or not (1 <= width <= 6):
        raise CodecError("corrupt Huffman header")
    pos = _HEAD.size
    table_bytes = (alphabet_size * width + 7) // 8
    if len(data) < pos + table_bytes:
        raise CodecError("truncated Huffman table")
    lengths = unpack_fixed(data[pos : pos + table_bytes], width, alphabet_size)
    pos += table_bytes
    _validate_table(lengths)
    # the payload length is implied by the code lengths and the symbol count only after decoding,
    # so decode against everything that is left and report what was used
    rest = data[pos:]
    symbols, used_bits = _decode_counted(HuffmanTable(lengths), rest, count)
    return symbols, pos + (used_bits + 7) // 8


def _decode_counted(table: HuffmanTable, data: bytes, count: int) -> tuple[np.ndarray, int]:
    symbols = huffman_decode(table, BitStream(data, 8 * len(data)), count)
    used = int(table.lengths[symbols].sum())
    return symbols, used
