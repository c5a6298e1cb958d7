"""End-to-end experiments on the desk-scale demo network: sweeps and the full pipeline."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .codec.container import Coder, pack_container
from .metrics import SweepRow, compression_ratio, fixed_width_bits, pruned_only_bits
from .pruner import PruneMask, apply_mask, magnitude_prune
from .quantizer import OffsetMode, QuantConfig, QuantizedModel, deployed_flat, quantize_model
from .trainer import Dataset, MlpSpec, accuracy, build_groups, codebook_finetune, sgd_train, split, synth_dataset
from .weightstore import ModelWeights, flatten

# demo network and data
DEMO_LAYERS = (16, 256, 256, 4)
DEMO_CLASSES = 4
DEMO_DIM = 16
DEMO_PER_CLASS = 1250
DEMO_TRAIN = 1000
DEMO_EPOCHS = 30
DEMO_LR = 0.05
DEMO_L1 = 5e-4

# codebook fine-tuning defaults
FINETUNE_LR = 1.0
FINETUNE_ITERS = 200


def demo_data(seed: int = 0, classes: int = DEMO_CLASSES, per_class: int = DEMO_PER_CLASS, d: int = DEMO_DIM,
              train: int | None = None) -> tuple[Dataset, Dataset]:
    """Deterministic train / held-out split of the synthetic blobs."""
    data = synth_dataset(seed, classes, per_class, d)
    if train is None:
        train = DEMO_TRAIN if len(data) > DEMO_TRAIN else len(data) // 5
    return split(data, train)


def train_demo(seed: int = 0, epochs: int = DEMO_EPOCHS) -> tuple[MlpSpec, ModelWeights, Dataset, Dataset]:
    spec = MlpSpec(DEMO_LAYERS)
    train, test = demo_data(seed)
    model = sgd_train(spec, seed, train, epochs, DEMO_LR, l1=DEMO_L1)
    return spec, model, train, test


def model_accuracy(spec: MlpSpec, model: ModelWeights, data: Dataset) -> float:
    return accuracy(spec, flatten(model), data)


def quantized_accuracy(spec: MlpSpec, qm: QuantizedModel, data: Dataset) -> float:
    return accuracy(spec, deployed_flat(qm), data)


def finetune(spec: MlpSpec, qm: QuantizedModel, train: Dataset, iters: int = FINETUNE_ITERS,
             lr: float = FINETUNE_LR, seed: int = 0) -> QuantizedModel:
    codebook = codebook_finetune(spec, qm, build_groups(qm), train, iters, lr, seed=seed)
    return qm.with_codebook(codebook)


def compress_row(spec, model, train, test, config: QuantConfig, finetuned: bool, coder="huffman",
                 iters=FINETUNE_ITERS, lr=FINETUNE_LR, mask: PruneMask | None = None) -> SweepRow:
    qm = quantize_model(model, config, mask)
    if finetuned:
        qm = finetune(spec, qm, train, iters, lr, seed=config.seed)
    box = pack_container(qm, coder)
    return SweepRow(
        n=config.n,
        delta=config.delta,
        offset_mode=config.offset_mode.name.lower(),
        randomize=config.randomize,
        finetuned=finetuned,
        compression_ratio=compression_ratio(model.total_count, box.total_bits),
        accuracy=100.0 * quantized_accuracy(spec, qm, test),
        bits_codebook=box.bits_codebook,
        bits_payload=box.bits_payload,
        bits_mask=box.bits_mask,
        bits_header=box.bits_header,
    )


def _row_task(args):
    return compress_row(*args[0], **args[1])


def sweep(spec, model, train, test, ns, deltas, modes=("boundary", "center"), randomize=(True, False),
          finetune_opts=(False,), coder="huffman", seed=0, iters=FINETUNE_ITERS, lr=FINETUNE_LR,
          mask: PruneMask | None = None, jobs: int = 1) -> list[SweepRow]:
    """One row per grid point, in grid order (n, delta, mode, randomize, finetune)."""
    grid = list(itertools.product(ns, deltas, modes, randomize, finetune_opts))
    if not grid:
        raise ValueError("empty sweep grid")
    tasks = [
        (
            (spec, model, train, test, QuantConfig(n, d, OffsetMode.parse(m), r, seed), ft),
            dict(coder=coder, iters=iters, lr=lr, mask=mask),
        )
        for n, d, m, r, ft in grid
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_row_task, tasks))
    return [_row_task(t) for t in tasks]


@dataclass(frozen=True)
class StageReport:
    stage: str
    accuracy: float  # percent
    compression_ratio: float
    bits: int

    def line(self) -> str:
        return f"{self.stage:<24s} accuracy {self.accuracy:7.3f}%  ratio {self.compression_ratio:8.3f}x  ({self.bits} bits)"


@dataclass(frozen=True)
class PipelineResult:
    baseline_accuracy: float
    stages: list[StageReport]
    quantized: QuantizedModel
    container_bytes: bytes


def run_pipeline(spec: MlpSpec, model: ModelWeights, train: Dataset, test: Dataset, sparsity: float,
                 config: QuantConfig, coder="bwt", retrain_epochs: int = 10, retrain_lr: float = DEMO_LR,
                 iters: int = FINETUNE_ITERS, lr: float = FINETUNE_LR, seed: int = 0) -> PipelineResult:
    """Prune, retrain survivors, quantize, fine-tune the codebook, entropy-code.

    Emits one report per stage with the accuracy on ``test`` and the ratio
    against 32-bit dense storage.
    """
    coder = Coder.parse(coder)
    N = model.total_count
    base = 100.0 * model_accuracy(spec, model, test)
    stages = []

    mask = None
    if sparsity > 0:
        mask = magnitude_prune(model, sparsity)
        pruned = sgd_train(spec, seed, train, retrain_epochs, retrain_lr, mask=mask, init=apply_mask(model, mask))
        bits = pruned_only_bits(mask)
    else:
        pruned = model
        bits = 32 * N
    stages.append(StageReport(f"prune ({100 * sparsity:.1f}%)", 100.0 * model_accuracy(spec, pruned, test),
                              compression_ratio(N, bits), bits))

    qm = quantize_model(pruned, config, mask)
    box = pack_container(qm, coder)
    bits = fixed_width_bits(qm, box)
    stages.append(StageReport("+ quantize", 100.0 * quantized_accuracy(spec, qm, test), compression_ratio(N, bits), bits))

    qm = finetune(spec, qm, train, iters, lr, seed=seed)
    box = pack_container(qm, coder)
    acc = 100.0 * quantized_accuracy(spec, qm, test)
    bits = fixed_width_bits(qm, box)
    stages.append(StageReport("+ codebook fine-tune", acc, compression_ratio(N, bits), bits))

    stages.append(StageReport(f"+ {coder.name.lower()} coding", acc, compression_ratio(N, box.total_bits), box.total_bits))
    return PipelineResult(base, stages, qm, box.to_bytes())
