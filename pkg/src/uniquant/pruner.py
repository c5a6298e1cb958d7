"""Global magnitude pruning and the prune mask bitmap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ShapeMismatchError, TruncatedError
from .weightstore import ModelWeights, flatten, scatter


@dataclass(frozen=True, eq=False)
class PruneMask:
    """One flag per weight in flattening order; ``True`` means the weight is kept."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits, dtype=bool).reshape(-1))
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def kept_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __len__(self) -> int:
        return self.bits.size

    def __eq__(self, other):
        if not isinstance(other, PruneMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def kept_indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def to_bytes(self) -> bytes:
        """N bits in flattening order, MSB-first within each byte, zero padded."""
        return np.packbits(self.bits).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, count: int) -> "PruneMask":
        need = (count + 7) // 8
        if len(data) < need:
            raise TruncatedError(f"mask bitmap needs {need} bytes for {count} weights, got {len(data)}")
        if len(data) > need:
            raise ShapeMismatchError(f"mask bitmap has {len(data)} bytes, expected {need}")
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=count).astype(bool)
        return cls(bits)


def _prune_count(sparsity: float, total: int) -> int:
    # decimal reading of the fraction so that e.g. 0.29 * 100 gives 29, not 28
    return math.floor(Fraction(repr(float(sparsity))) * total)


def magnitude_prune(model: ModelWeights, sparsity: float) -> PruneMask:
    """Mask out the ``floor(sparsity * N)`` smallest-magnitude weights.

    The threshold is global across all tensors. Among equal magnitudes the
    lower flattening index is pruned first.
    """
    if not (0.0 <= sparsity < 1.0):
        raise ValueError(f"sparsity must lie in [0, 1), got {sparsity}")
    flat = flatten(model)
    drop = _prune_count(sparsity, flat.size)
    order = np.argsort(np.abs(flat), kind="stable")
    bits = np.ones(flat.size, dtype=bool)
    bits[order[:drop]] = False
    return PruneMask(bits)


def apply_mask(model: ModelWeights, mask: PruneMask) -> ModelWeights:
    """Zero out masked weights; shapes are unchanged."""
    if len(mask) != model.total_count:
        raise ShapeMismatchError(f"mask has {len(mask)} entries, model has {model.total_count} weights")
    flat = flatten(model).copy()
    flat[~mask.bits] = 0.0
    return scatter(model, flat)
