"""Lossless coders for the cluster-id stream and the compressed container."""

from .blocksort import block_compress, block_decompress, bwt_forward, bwt_inverse, mtf_decode, mtf_encode
from .container import Coder, CompressedContainer, pack_container, unpack_container
from .huffman import HuffmanTable, huffman_decode, huffman_encode
from .lzw import lzw_decode, lzw_encode

__all__ = [
    "Coder",
    "CompressedContainer",
    "HuffmanTable",
    "block_compress",
    "block_decompress",
    "bwt_forward",
    "bwt_inverse",
    "huffman_decode",
    "huffman_encode",
    "lzw_decode",
    "lzw_encode",
    "mtf_decode",
    "mtf_encode",
    "pack_container",
    "unpack_container",
]
