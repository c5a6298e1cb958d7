"""Bit accounting and compression ratios.

The uncompressed baseline is 32 bits per dense weight. Compressed sizes always
include the header, the codebook and the mask, not just the coded payload.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

from .codec import blocksort
from .codec.container import CompressedContainer, symbol_width
from .pruner import PruneMask
from .quantizer import QuantizedModel

FLOAT_BITS = 32


def compression_ratio(total_weights: int, compressed_bits: int) -> float:
    if compressed_bits <= 0:
        raise ValueError("compressed size must be positive")
    return FLOAT_BITS * total_weights / compressed_bits


def mask_bits(mask: PruneMask) -> int:
    return 8 * len(blocksort.block_compress(mask.to_bytes()))


def pruned_only_bits(mask: PruneMask) -> int:
    """Sparse float storage: block-coded mask plus 32 bits per surviving weight."""
    return mask_bits(mask) + FLOAT_BITS * mask.kept_count


def fixed_width_bits(qm: QuantizedModel, container: CompressedContainer) -> int:
    """Size of ``container`` if its payload were plain fixed-width cluster ids."""
    raw = qm.vector_count * symbol_width(qm.codebook.size)
    return container.bits_header + container.bits_codebook + container.bits_mask + 8 * math.ceil(raw / 8)


@dataclass(frozen=True)
class SweepRow:
    n: int
    delta: float
    offset_mode: str
    randomize: bool
    finetuned: bool
    compression_ratio: float
    accuracy: float  # percent
    bits_codebook: int
    bits_payload: int
    bits_mask: int
    bits_header: int

    @property
    def total_bits(self) -> int:
        return self.bits_codebook + self.bits_payload + self.bits_mask + self.bits_header

    def formatted(self) -> dict[str, str]:
        row = asdict(self)
        row["delta"] = repr(self.delta)
        row["randomize"] = str(self.randomize).lower()
        row["finetuned"] = str(self.finetuned).lower()
        row["compression_ratio"] = f"{self.compression_ratio:.6f}"
        row["accuracy"] = f"{self.accuracy:.4f}"
        return {k: str(v) for k, v in row.items()}


CSV_FIELDS = [f.name for f in fields(SweepRow)]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r.formatted())
    return buf.getvalue()


def rows_from_csv(text: str) -> list[SweepRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(
            SweepRow(
                n=int(rec["n"]),
                delta=float(rec["delta"]),
                offset_mode=rec["offset_mode"],
                randomize=rec["randomize"] == "true",
                finetuned=rec["finetuned"] == "true",
                compression_ratio=float(rec["compression_ratio"]),
                accuracy=float(rec["accuracy"]),
                bits_codebook=int(rec["bits_codebook"]),
                bits_payload=int(rec["bits_payload"]),
                bits_mask=int(rec["bits_mask"]),
                bits_header=int(rec["bits_header"]),
            )
        )
    return rows
