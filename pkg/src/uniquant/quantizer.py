"""Randomized (dithered) lattice quantization of weight vectors.

Weights are grouped into ``n``-dimensional vectors (zero padded at the tail),
each vector gets one uniform dither scalar repeated over its coordinates, and
every coordinate is rounded to the cubic lattice ``delta * Z^n + offset``.
Decoding subtracts the same dither again, which the decoder regenerates from
the shared seed.

Dither stream: Philox4x64-10 keyed with ``(seed, 0)`` and counter starting at
zero. The i-th raw 64-bit output ``r`` gives
``U_i = ((r >> 11) * 2**-53 - 0.5) * delta``, i.e. uniform on
``[-delta/2, delta/2)``. With ``randomize=False`` every ``U_i`` is zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, ShapeMismatchError
from .pruner import PruneMask
from .weightstore import ModelWeights, TensorRecord, flatten, table_of

_U53 = 2.0**-53


class OffsetMode(enum.IntEnum):
    """Where the bin boundaries sit.

    BOUNDARY: boundaries at ``i * delta``, reconstruction points at ``(i + 1/2) * delta``.
    CENTER: boundaries at ``(2i + 1) * delta / 2``, zero is a reconstruction point.
    """

    BOUNDARY = 0
    CENTER = 1

    @classmethod
    def parse(cls, value) -> "OffsetMode":
        if isinstance(value, OffsetMode):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown offset mode {value!r}; use 'boundary' or 'center'") from None
        return cls(int(value))


@dataclass(frozen=True)
class QuantConfig:
    n: int = 1
    delta: float = 0.05
    offset_mode: OffsetMode = OffsetMode.CENTER
    randomize: bool = True
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"vector dimension n must be a positive integer, got {self.n}")
        delta = float(np.float32(self.delta))  # the container stores delta as f32
        if not (math.isfinite(delta) and delta > 0):
            raise ValueError(f"bin size delta must be positive and finite, got {self.delta}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "offset_mode", OffsetMode.parse(self.offset_mode))
        object.__setattr__(self, "randomize", bool(self.randomize))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def offset(self) -> float:
        return self.delta / 2 if self.offset_mode is OffsetMode.BOUNDARY else 0.0


def vectorize(flat: Sequence[float], n: int) -> tuple[np.ndarray, int]:
    """Group weights into consecutive ``n``-vectors, zero padding the last one.

    Returns a ``(ceil(N/n), n)`` float64 array and the number of padded slots.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"vector dimension n must be >= 1, got {n}")
    flat = np.asarray(flat, dtype=np.float64).reshape(-1)
    count = -(-flat.size // n)
    pad = count * n - flat.size
    padded = np.zeros(count * n, dtype=np.float64)
    padded[: flat.size] = flat
    return padded.reshape(count, n), pad


def gen_dither(config: QuantConfig, count: int) -> np.ndarray:
    """One dither scalar per vector, uniform on ``[-delta/2, delta/2)``."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if not config.randomize or count == 0:
        return np.zeros(count, dtype=np.float64)
    bitgen = np.random.Philox(key=config.seed)
    raw = bitgen.random_raw(count)
    unit = (raw >> np.uint64(11)).astype(np.float64) * _U53
    return (unit - 0.5) * config.delta


def round_half_away(t: np.ndarray) -> np.ndarray:
    """Nearest integer, ties away from zero. Exact for every finite float."""
    t = np.asarray(t, dtype=np.float64)
    whole = np.trunc(t)
    frac = t - whole  # exact
    return (whole + np.where(np.abs(frac) >= 0.5, np.sign(t), 0.0)).astype(np.int64)


def quantize_vectors(vectors: np.ndarray, config: QuantConfig, dither: np.ndarray) -> np.ndarray:
    """Lattice indices for a ``(V, n)`` array of vectors with per-vector dither."""
    vectors = np.asarray(vectors, dtype=np.float64)
    dither = np.asarray(dither, dtype=np.float64).reshape(-1)
    if vectors.ndim != 2 or vectors.shape[0] != dither.size:
        raise ShapeMismatchError(f"{vectors.shape} vectors do not match {dither.size} dither values")
    if not (np.all(np.isfinite(vectors)) and np.all(np.isfinite(dither))):
        raise DataError("cannot quantize non-finite values")
    dithered = vectors + dither[:, None]
    return round_half_away((dithered - config.offset) / config.delta)


def lattice_quantize(v: Sequence[float], config: QuantConfig, U: float = 0.0) -> tuple[int, ...]:
    """Quantize a single vector ``v`` with dither scalar ``U``."""
    row = np.asarray(v, dtype=np.float64).reshape(1, -1)
    return tuple(int(k) for k in quantize_vectors(row, config, np.array([U]))[0])


def decode_points(points: np.ndarray, config: QuantConfig) -> np.ndarray:
    """Reconstruction point ``delta * k + offset`` for each lattice index."""
    return np.asarray(points, dtype=np.float64) * config.delta + config.offset


@dataclass(frozen=True, eq=False)
class Codebook:
    """Shared reconstruction vectors, one row per cluster id.

    ``points`` holds the lattice index of each cluster and is only known on the
    encoder side; a codebook read back from a container carries ``None`` there.
    Equality compares the centers, which are what the decoder deploys.
    """

    centers: np.ndarray
    points: np.ndarray | None = None

    def __post_init__(self):
        centers = np.ascontiguousarray(np.asarray(self.centers, dtype=np.float32))
        if centers.ndim != 2 or centers.shape[0] < 1:
            raise ShapeMismatchError(f"codebook centers must be a non-empty 2-D array, got {centers.shape}")
        object.__setattr__(self, "centers", centers)
        if self.points is not None:
            points = np.asarray(self.points, dtype=np.int64)
            if points.shape != centers.shape:
                raise ShapeMismatchError("codebook points and centers disagree in shape")
            object.__setattr__(self, "points", points)

    @property
    def size(self) -> int:
        """Number of clusters (k_VQ)."""
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def index_of(self) -> dict[tuple[int, ...], int]:
        if self.points is None:
            raise DataError("lattice points are not available for a decoded codebook")
        return {tuple(int(x) for x in p): i for i, p in enumerate(self.points)}

    def with_centers(self, centers: np.ndarray) -> "Codebook":
        return Codebook(centers, self.points)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.centers.shape == other.centers.shape and self.centers.tobytes() == other.centers.tobytes()


def build_codebook(points, config: QuantConfig) -> tuple[Codebook, np.ndarray]:
    """Assign dense cluster ids to lattice points in order of first appearance.

    Returns the codebook (centers initialised to the decoded lattice points)
    and the symbol stream, one cluster id per input point.
    """
    pts = np.asarray(points, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] == 0:
        raise ValueError("cannot build a codebook from zero points")
    uniq, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    symbols = rank[inverse.reshape(-1)]
    ordered = uniq[order]
    return Codebook(decode_points(ordered, config), ordered), symbols.astype(np.int64)


@dataclass(frozen=True, eq=False)
class QuantizedModel:
    config: QuantConfig
    symbols: np.ndarray
    codebook: Codebook
    pad_count: int
    template: tuple[tuple[str, tuple[int, ...]], ...]
    mask: PruneMask | None = None

    def __post_init__(self):
        symbols = np.ascontiguousarray(np.asarray(self.symbols, dtype=np.int64).reshape(-1))
        symbols.flags.writeable = False
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "template", tuple((str(a), tuple(int(d) for d in s)) for a, s in self.template))

    @property
    def total_count(self) -> int:
        """N, the dense weight count of the original model."""
        return sum(math.prod(shape) for _, shape in self.template)

    @property
    def quantized_count(self) -> int:
        """N_q, the number of weights that went through the quantizer."""
        return self.mask.kept_count if self.mask is not None else self.total_count

    @property
    def vector_count(self) -> int:
        return self.symbols.size

    def with_codebook(self, codebook: Codebook) -> "QuantizedModel":
        return QuantizedModel(self.config, self.symbols, codebook, self.pad_count, self.template, self.mask)

    def __eq__(self, other):
        if not isinstance(other, QuantizedModel):
            return NotImplemented
        return (
            self.config == other.config
            and np.array_equal(self.symbols, other.symbols)
            and self.codebook == other.codebook
            and self.pad_count == other.pad_count
            and self.template == other.template
            and self.mask == other.mask
        )


def quantize_model(model: ModelWeights, config: QuantConfig, mask: PruneMask | None = None) -> QuantizedModel:
    """Flatten, drop pruned weights, vectorize, dither, quantize and build the codebook."""
    flat = flatten(model)
    if mask is not None:
        if len(mask) != flat.size:
            raise ShapeMismatchError(f"mask has {len(mask)} entries, model has {flat.size} weights")
        flat = flat[mask.bits]
    if flat.size == 0:
        raise DataError("nothing to quantize: every weight is pruned")
    vectors, pad = vectorize(flat, config.n)
    dither = gen_dither(config, vectors.shape[0])
    points = quantize_vectors(vectors, config, dither)
    codebook, symbols = build_codebook(points, config)
    return QuantizedModel(config, symbols, codebook, pad, table_of(model), mask)


def check_consistency(qm: QuantizedModel) -> None:
    n = qm.config.n
    if qm.codebook.dim != n:
        raise ShapeMismatchError(f"codebook dimension {qm.codebook.dim} != n={n}")
    if qm.mask is not None and len(qm.mask) != qm.total_count:
        raise ShapeMismatchError(f"mask has {len(qm.mask)} entries, template holds {qm.total_count} weights")
    nq = qm.quantized_count
    expect_vectors = -(-nq // n)
    if qm.vector_count != expect_vectors or qm.pad_count != expect_vectors * n - nq:
        raise ShapeMismatchError(
            f"{qm.vector_count} vectors with {qm.pad_count} pad slots cannot hold {nq} weights at n={n}"
        )
    if qm.symbols.size and (qm.symbols.min() < 0 or qm.symbols.max() >= qm.codebook.size):
        raise DataError(f"symbol out of codebook range [0, {qm.codebook.size})")


def reconstruct_vectors(qm: QuantizedModel, centers: np.ndarray | None = None) -> np.ndarray:
    """Dither-cancelled vectors ``c[symbol_i] - U_i``, pad slots included (float64)."""
    check_consistency(qm)
    if centers is None:
        centers = qm.codebook.centers
    dither = gen_dither(qm.config, qm.vector_count)
    return np.asarray(centers, dtype=np.float64)[qm.symbols] - dither[:, None]


def deployed_flat(qm: QuantizedModel, centers: np.ndarray | None = None) -> np.ndarray:
    """Full-length float64 weight vector as the decoder deploys it (pruned slots are zero)."""
    vecs = reconstruct_vectors(qm, centers).reshape(-1)[: qm.quantized_count]
    if qm.mask is None:
        return vecs
    full = np.zeros(qm.total_count, dtype=np.float64)
    full[qm.mask.bits] = vecs
    return full


def dequantize(qm: QuantizedModel) -> ModelWeights:
    """Decode a quantized model back to float32 weights, cancelling the dither."""
    flat = deployed_flat(qm).astype(np.float32)
    tensors = []
    pos = 0
    for name, shape in qm.template:
        size = math.prod(shape)
        tensors.append(TensorRecord(name, shape, flat[pos : pos + size]))
        pos += size
    return ModelWeights(tuple(tensors))
