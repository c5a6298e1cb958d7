"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 bad or corrupt data, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments as ex
from .codec.container import Coder, pack_container, unpack_container
from .errors import DataError
from .metrics import compression_ratio, rows_to_csv
from .pruner import PruneMask, apply_mask, magnitude_prune
from .quantizer import OffsetMode, QuantConfig, dequantize, quantize_model
from .trainer import MlpSpec, sgd_train
from .weightstore import load_model, save_model

log = logging.getLogger("uniquant")

EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _list(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None

    return parse


def _add_quant(p, vector=False):
    if vector:
        p.add_argument("--n", type=_list(int), default=[1], help="comma-separated vector dimensions")
        p.add_argument("--delta", type=_list(float), default=[0.05], help="comma-separated bin sizes")
        p.add_argument("--offset", type=_list(str), default=["boundary", "center"])
        p.add_argument("--randomize", type=_list(_bool), default=[True, False])
        p.add_argument("--finetune", type=_list(str), default=["none"], help="none,codebook")
    else:
        p.add_argument("--n", type=int, default=1)
        p.add_argument("--delta", type=float, default=0.05)
        p.add_argument("--offset", choices=["boundary", "center"], default="center")
        p.add_argument("--randomize", type=_bool, default=True)
        p.add_argument("--finetune", choices=["none", "codebook"], default="none")
    p.add_argument("--seed", type=int, default=0, help="dither seed")
    p.add_argument("--lr", type=float, default=ex.FINETUNE_LR, help="codebook fine-tuning learning rate")
    p.add_argument("--iters", type=int, default=ex.FINETUNE_ITERS, help="codebook fine-tuning iterations")


def _add_data(p):
    g = p.add_argument_group("synthetic dataset")
    g.add_argument("--data-seed", type=int, default=0)
    g.add_argument("--classes", type=int, default=ex.DEMO_CLASSES)
    g.add_argument("--per-class", type=int, default=ex.DEMO_PER_CLASS)
    g.add_argument("--dim", type=int, default=ex.DEMO_DIM)
    g.add_argument("--train-count", type=int, default=None, help="samples used for training; the rest are held out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uniquant", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="quantize and entropy-code a model file")
    p.add_argument("model")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--mask", help="prune mask bitmap written by the prune command")
    p.add_argument("--coder", choices=[c.name.lower() for c in Coder], default="bwt")
    _add_quant(p)
    _add_data(p)

    p = sub.add_parser("decompress", help="decode a container back to a model file")
    p.add_argument("container")
    p.add_argument("--out", "-o", required=True)

    p = sub.add_parser("eval", help="accuracy of a model on the held-out split")
    p.add_argument("model")
    _add_data(p)

    p = sub.add_parser("train-demo", help="train the demo MLP")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=ex.DEMO_EPOCHS)

    p = sub.add_parser("prune", help="magnitude-prune a model, optionally retraining survivors")
    p.add_argument("model")
    p.add_argument("--sparsity", type=float, required=True)
    p.add_argument("--out", "-o", required=True, help="pruned model file")
    p.add_argument("--mask-out", required=True, help="mask bitmap file")
    p.add_argument("--retrain-epochs", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    _add_data(p)

    p = sub.add_parser("sweep", help="grid of quantizer settings, one CSV row per point")
    p.add_argument("model")
    p.add_argument("--coder", choices=[c.name.lower() for c in Coder], default="huffman")
    p.add_argument("--csv", help="output file (default: stdout)")
    p.add_argument("--jobs", type=int, default=1)
    _add_quant(p, vector=True)
    _add_data(p)

    p = sub.add_parser("pipeline", help="prune, retrain, quantize, fine-tune and code, reporting each stage")
    p.add_argument("model")
    p.add_argument("--sparsity", type=float, default=0.9)
    p.add_argument("--coder", choices=[c.name.lower() for c in Coder], default="bwt")
    p.add_argument("--retrain-epochs", type=int, default=10)
    p.add_argument("--out", "-o", help="also write the final container here")
    _add_quant(p)
    p.set_defaults(n=2, delta=0.2)
    _add_data(p)
    return parser


def _data(args):
    return ex.demo_data(args.data_seed, args.classes, args.per_class, args.dim, args.train_count)


def _config(args) -> QuantConfig:
    try:
        return QuantConfig(args.n, args.delta, OffsetMode.parse(args.offset), args.randomize, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_accounting(box, total: int, out=None):
    out = out or sys.stdout
    print(f"header   {box.bits_header:>10d} bits", file=out)
    print(f"codebook {box.bits_codebook:>10d} bits", file=out)
    print(f"mask     {box.bits_mask:>10d} bits", file=out)
    print(f"payload  {box.bits_payload:>10d} bits", file=out)
    print(f"total    {box.total_bits:>10d} bits", file=out)
    print(f"ratio    {compression_ratio(total, box.total_bits):.4f}x (vs {32 * total} bits dense float32)", file=out)


def cmd_compress(args) -> int:
    model = load_model(args.model)
    mask = None
    if args.mask:
        with open(args.mask, "rb") as fh:
            mask = PruneMask.from_bytes(fh.read(), model.total_count)
    config = _config(args)
    qm = quantize_model(model, config, mask)
    if args.finetune == "codebook":
        train, _ = _data(args)
        spec = MlpSpec.from_model(model)
        qm = ex.finetune(spec, qm, train, args.iters, args.lr, seed=config.seed)
    box = pack_container(qm, args.coder)
    with open(args.out, "wb") as fh:
        fh.write(box.to_bytes())
    print(f"k_VQ     {qm.codebook.size:>10d} clusters, {qm.vector_count} vectors")
    _print_accounting(box, model.total_count)
    return 0


def cmd_decompress(args) -> int:
    with open(args.container, "rb") as fh:
        qm, coder = unpack_container(fh.read())
    save_model(dequantize(qm), args.out)
    print(f"decoded {qm.total_count} weights ({coder.name.lower()} payload, k_VQ={qm.codebook.size})")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    spec = MlpSpec.from_model(model)
    _, test = _data(args)
    acc = ex.model_accuracy(spec, model, test)
    print(f"accuracy {100 * acc:.4f}% on {len(test)} held-out samples")
    return 0


def cmd_train_demo(args) -> int:
    spec, model, _, test = ex.train_demo(args.seed, args.epochs)
    save_model(model, args.out)
    print(f"trained {spec.layer_sizes} ({spec.param_count} weights): accuracy {100 * ex.model_accuracy(spec, model, test):.4f}%")
    return 0


def cmd_prune(args) -> int:
    model = load_model(args.model)
    try:
        mask = magnitude_prune(model, args.sparsity)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    pruned = apply_mask(model, mask)
    if args.retrain_epochs:
        spec = MlpSpec.from_model(model)
        train, _ = _data(args)
        pruned = sgd_train(spec, args.seed, train, args.retrain_epochs, ex.DEMO_LR, mask=mask, init=pruned)
    save_model(pruned, args.out)
    with open(args.mask_out, "wb") as fh:
        fh.write(mask.to_bytes())
    print(f"kept {mask.kept_count} of {len(mask)} weights")
    return 0


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    spec = MlpSpec.from_model(model)
    train, test = _data(args)
    try:
        modes = [OffsetMode.parse(m).name.lower() for m in args.offset]
        ft = []
        for f in args.finetune:
            if f not in ("none", "codebook"):
                raise ValueError(f"unknown fine-tune option {f!r}")
            ft.append(f == "codebook")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = ex.sweep(spec, model, train, test, args.n, args.delta, modes, args.randomize, ft,
                    coder=args.coder, seed=args.seed, iters=args.iters, lr=args.lr, jobs=args.jobs)
    text = rows_to_csv(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_pipeline(args) -> int:
    model = load_model(args.model)
    spec = MlpSpec.from_model(model)
    train, test = _data(args)
    if not (0 <= args.sparsity < 1):
        raise UsageError("sparsity must lie in [0, 1)")
    res = ex.run_pipeline(spec, model, train, test, args.sparsity, _config(args), args.coder,
                          retrain_epochs=args.retrain_epochs, iters=args.iters, lr=args.lr, seed=args.seed)
    print(f"# baseline accuracy {res.baseline_accuracy:.3f}%")
    for stage in res.stages:
        print(stage.line())
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(res.container_bytes)
    return 0


COMMANDS = {
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "eval": cmd_eval,
    "train-demo": cmd_train_demo,
    "prune": cmd_prune,
    "sweep": cmd_sweep,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return exc.code
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"uniquant: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"uniquant: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"uniquant: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
