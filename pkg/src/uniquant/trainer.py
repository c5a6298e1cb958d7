"""A small ReLU MLP with exact backprop, synthetic data, SGD and codebook fine-tuning.

Parameters live in one flat float64 vector whose order matches the model file:
for each layer ``i``, ``fc{i}.weight`` (out x in, row-major) then ``fc{i}.bias``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .pruner import PruneMask
from .quantizer import Codebook, QuantizedModel, check_consistency, gen_dither
from .weightstore import ModelWeights, TensorRecord, flatten

BATCH_SIZE = 32


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need at least two positive layer sizes, got {self.layer_sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def param_count(self) -> int:
        return sum(o * i + o for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    def tensor_table(self) -> list[tuple[str, tuple[int, ...]]]:
        table = []
        for k, (i, o) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            table += [(f"fc{k}.weight", (o, i)), (f"fc{k}.bias", (o,))]
        return table

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        params = np.asarray(params)
        if params.size != self.param_count:
            raise ShapeMismatchError(f"expected {self.param_count} parameters, got {params.size}")
        layers = []
        pos = 0
        for i, o in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = params[pos : pos + o * i].reshape(o, i)
            pos += o * i
            b = params[pos : pos + o]
            pos += o
            layers.append((W, b))
        return layers

    def to_model(self, params: np.ndarray) -> ModelWeights:
        params = np.asarray(params, dtype=np.float32)
        if params.size != self.param_count:
            raise ShapeMismatchError(f"expected {self.param_count} parameters, got {params.size}")
        recs = []
        pos = 0
        for name, shape in self.tensor_table():
            size = int(np.prod(shape))
            recs.append(TensorRecord(name, shape, params[pos : pos + size]))
            pos += size
        return ModelWeights(tuple(recs))

    @classmethod
    def from_model(cls, model: ModelWeights) -> "MlpSpec":
        """Recover the layer sizes from ``fc{i}.weight``/``fc{i}.bias`` tensors."""
        sizes = []
        for k in range(len(model.tensors) // 2):
            try:
                W, b = model[f"fc{k}.weight"], model[f"fc{k}.bias"]
            except KeyError as exc:
                raise ShapeMismatchError(f"model is not an MLP: missing tensor {exc}") from None
            if len(W.shape) != 2 or b.shape != (W.shape[0],) or (sizes and sizes[-1] != W.shape[1]):
                raise ShapeMismatchError(f"layer {k} has inconsistent shapes {W.shape}, {b.shape}")
            if not sizes:
                sizes.append(W.shape[1])
            sizes.append(W.shape[0])
        spec = cls(tuple(sizes))
        if spec.tensor_table() != [(t.name, t.shape) for t in model.tensors]:
            raise ShapeMismatchError("model tensors are not in MLP layer order")
        return spec


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.labels.size

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx])


def class_centers(seed: int, classes: int, d: int) -> np.ndarray:
    """Unit-norm class directions scaled by 3.

    With ``classes <= d`` the directions are the vertices of a centred regular
    simplex under a seeded random rotation, so every pair of classes is equally
    far apart. Otherwise they are random unit vectors.
    """
    rng = np.random.default_rng([seed, 0])
    if 2 <= classes <= d:
        dirs = np.zeros((classes, d))
        dirs[:, :classes] = np.eye(classes) - 1.0 / classes
        rotation, _ = np.linalg.qr(rng.standard_normal((d, d)))
        dirs = dirs @ rotation.T
    else:
        dirs = rng.standard_normal((classes, d))
    return 3.0 * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def synth_dataset(seed: int, classes: int, per_class: int, d: int) -> Dataset:
    """Isotropic unit-variance Gaussian blobs around :func:`class_centers`, shuffled."""
    if min(classes, per_class, d) < 1:
        raise ValueError("classes, per_class and d must all be positive")
    centers = class_centers(seed, classes, d)
    rng = np.random.default_rng([seed, 1])
    labels = np.repeat(np.arange(classes), per_class)
    feats = centers[labels] + rng.standard_normal((labels.size, d))
    perm = rng.permutation(labels.size)
    return Dataset(feats[perm], labels[perm].astype(np.int64))


def split(data: Dataset, train_count: int) -> tuple[Dataset, Dataset]:
    """First ``train_count`` samples for training, the rest held out."""
    if not (0 < train_count < len(data)):
        raise ValueError(f"train_count must lie in (0, {len(data)})")
    return data.subset(slice(0, train_count)), data.subset(slice(train_count, None))


def _check_batch(spec: MlpSpec, X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if X.ndim != 2 or X.shape[1] != spec.layer_sizes[0] or X.shape[0] != y.size or y.size == 0:
        raise ShapeMismatchError(f"batch {X.shape} / {y.shape} does not fit input size {spec.layer_sizes[0]}")
    if y.min() < 0 or y.max() >= spec.classes:
        raise ShapeMismatchError(f"labels must lie in [0, {spec.classes})")
    return X, y


def _forward_cache(spec: MlpSpec, params, X):
    acts = [X]
    h = X
    layers = spec.unpack(np.asarray(params, dtype=np.float64))
    for k, (W, b) in enumerate(layers):
        z = h @ W.T + b
        h = np.maximum(z, 0.0) if k < len(layers) - 1 else z
        acts.append(h)
    return layers, acts


def _softmax_xent(logits, y):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return logp, -logp[np.arange(y.size), y].mean()


def forward(spec: MlpSpec, params, X, y) -> tuple[float, float]:
    """Mean softmax cross-entropy and accuracy (ties go to the lowest class index)."""
    X, y = _check_batch(spec, X, y)
    _, acts = _forward_cache(spec, params, X)
    logits = acts[-1]
    _, loss = _softmax_xent(logits, y)
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return float(loss), acc


def backward(spec: MlpSpec, params, X, y) -> np.ndarray:
    """Gradient of the mean loss with respect to every parameter, in flat order."""
    X, y = _check_batch(spec, X, y)
    layers, acts = _forward_cache(spec, params, X)
    logp, _ = _softmax_xent(acts[-1], y)
    delta = np.exp(logp)
    delta[np.arange(y.size), y] -= 1.0
    delta /= y.size
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        h_in = acts[k]
        grads.append((delta.T @ h_in, delta.sum(axis=0)))
        if k:
            delta = (delta @ W) * (acts[k] > 0)
    out = []
    for gW, gb in reversed(grads):
        out += [gW.ravel(), gb]
    return np.concatenate(out)


def accuracy(spec: MlpSpec, params, data: Dataset) -> float:
    return forward(spec, params, data.features, data.labels)[1]


def init_params(spec: MlpSpec, seed: int) -> np.ndarray:
    """He-scaled Gaussian weights, zero biases."""
    rng = np.random.default_rng([seed, 2])
    parts = []
    for i, o in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        parts += [rng.standard_normal(o * i) * np.sqrt(2.0 / i), np.zeros(o)]
    return np.concatenate(parts)


def _params_of(model: ModelWeights) -> np.ndarray:
    return flatten(model).astype(np.float64)


def sgd_train(
    spec: MlpSpec,
    init_seed: int,
    data: Dataset,
    epochs: int,
    lr: float,
    mask: PruneMask | None = None,
    init: ModelWeights | None = None,
    batch_size: int = BATCH_SIZE,
    l1: float = 0.0,
) -> ModelWeights:
    """Minibatch SGD with an optional L1 penalty ``l1 * sum|w|``.

    Weights outside ``mask`` are held at exactly zero.
    """
    if epochs < 0 or lr <= 0:
        raise ValueError("epochs must be >= 0 and lr > 0")
    params = init_params(spec, init_seed) if init is None else _params_of(init)
    if params.size != spec.param_count:
        raise ShapeMismatchError("initial weights do not match the network spec")
    keep = None
    if mask is not None:
        if len(mask) != params.size:
            raise ShapeMismatchError(f"mask has {len(mask)} entries, network has {params.size} weights")
        keep = mask.bits
        params = np.where(keep, params, 0.0)
    rng = np.random.default_rng([init_seed, 3])
    for _ in range(epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(data), batch_size):
            idx = order[start : start + batch_size]
            grad = backward(spec, params, data.features[idx], data.labels[idx])
            if l1:
                grad += l1 * np.sign(params)
            if keep is not None:
                grad[~keep] = 0.0
            params -= lr * grad
    return spec.to_model(params)


@dataclass(frozen=True, eq=False)
class FinetuneGroups:
    """Which weight positions share each codebook entry ``c[i, j]``.

    ``slot_group[s]`` is the group id ``i * n + j`` of vector slot ``s`` (pad
    slots get -1) and ``slot_position[s]`` its index in the full flattened model
    (-1 for pad slots).
    """

    slot_group: np.ndarray
    slot_position: np.ndarray
    n: int
    group_count: int

    def index_sets(self) -> dict[tuple[int, int], set[int]]:
        sets: dict[tuple[int, int], set[int]] = {}
        for g, p in zip(self.slot_group.tolist(), self.slot_position.tolist()):
            if g >= 0:
                sets.setdefault((g // self.n, g % self.n), set()).add(p)
        return sets


def build_groups(qm: QuantizedModel) -> FinetuneGroups:
    check_consistency(qm)
    n = qm.config.n
    group = (qm.symbols[:, None] * n + np.arange(n)[None, :]).reshape(-1)
    position = np.full(group.size, -1, dtype=np.int64)
    nq = qm.quantized_count
    position[:nq] = qm.mask.kept_indices() if qm.mask is not None else np.arange(nq)
    group = np.where(position >= 0, group, -1)
    return FinetuneGroups(group, position, n, qm.codebook.size * n)


def group_mean_step(centers: np.ndarray, groups: FinetuneGroups, grad: np.ndarray, lr: float) -> np.ndarray:
    """One shared-value update: each entry moves by ``-lr`` times the mean gradient of its group."""
    centers = np.asarray(centers, dtype=np.float64)
    valid = groups.slot_group >= 0
    gid = groups.slot_group[valid]
    g = np.asarray(grad, dtype=np.float64)[groups.slot_position[valid]]
    sums = np.bincount(gid, weights=g, minlength=groups.group_count)
    counts = np.bincount(gid, minlength=groups.group_count)
    mean = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return centers - lr * mean.reshape(centers.shape)


def codebook_finetune(
    spec: MlpSpec,
    qm: QuantizedModel,
    groups: FinetuneGroups,
    data: Dataset,
    iters: int = 200,
    lr: float = 0.01,
    batch_size: int = BATCH_SIZE,
    seed: int = 0,
) -> Codebook:
    """Fine-tune the shared values with group-averaged gradients.

    The loss gradient is taken at the dither-cancelled deployed weights while the
    update is applied to the shared values themselves.
    """
    if groups.group_count != qm.codebook.size * qm.config.n or groups.slot_group.size != qm.vector_count * qm.config.n:
        raise ShapeMismatchError("fine-tuning groups do not match the quantized model")
    if spec.param_count != qm.total_count:
        raise ShapeMismatchError("network spec does not match the quantized model")
    centers = qm.codebook.centers.astype(np.float64)
    dither = gen_dither(qm.config, qm.vector_count)
    valid = groups.slot_position >= 0
    positions = groups.slot_position[valid]
    rng = np.random.default_rng([seed, 4])
    params = np.zeros(spec.param_count)
    for _ in range(iters):
        slots = (centers[qm.symbols] - dither[:, None]).reshape(-1)
        params[positions] = slots[valid]
        idx = rng.choice(len(data), size=min(batch_size, len(data)), replace=False)
        grad = backward(spec, params, data.features[idx], data.labels[idx])
        centers = group_mean_step(centers, groups, grad, lr)
    return qm.codebook.with_centers(centers.astype(np.float32))
