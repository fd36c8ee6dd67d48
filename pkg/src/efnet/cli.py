"""``efnet`` command line: train, eval, bench and verify.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 divergence,
5 operation-count mismatch, 6 verification failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import constructions
from .counting import count_ops, theoretical_counts
from .data import append_metrics, load_mnist, parse_checkpoint, save_checkpoint, xor_dataset
from .errors import DivergenceError, FormatError, ParameterError, ShapeError
from .layers import (AdditiveConv, AdditiveDense, ClassicConv, ClassicDense,
                     additive_conv_forward, additive_dense_forward, classic_dense_forward,
                     maxpool2_forward)
from .tensor import make_rng
from .training import SgdConfig, build_network, evaluate, predictions, sgd_train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_COUNT_MISMATCH = 5
EXIT_VERIFY = 6

ARCHS = ("mlp2", "mlp3", "lenet", "xor")
ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")

# per-architecture defaults used when a flag is left unset
ARCH_DEFAULTS = {
    "xor": {"lr": 0.01, "epochs": 1000, "activation": "relu"},
    "mlp2": {"lr": 0.005, "epochs": 5, "activation": "relu"},
    "mlp3": {"lr": 0.005, "epochs": 5, "activation": "relu"},
    "lenet": {"lr": 0.1, "epochs": 2, "activation": "tanh"},
}

BENCH_DENSE = [(d, M) for d in (16, 784) for M in (10, 300)]
# (in_channels, filters, height, width, kernel): the two LeNet conv layers
BENCH_CONV = [(1, 6, 28, 28, 5), (6, 16, 12, 12, 5)]


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a value >= 1, got {v}")
    return v


def _count(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a value >= 0, got {v}")
    return v


def _seed(text):
    v = _count(text)
    if v >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _learning_rate(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not np.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"learning rate must be finite and >= 0, got {text}")
    return v


def _dims(text):
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not dims or min(dims) < 1:
        raise argparse.ArgumentTypeError("dimensions must be >= 1")
    return dims


def _add_data_flags(p, test_only=False):
    p.add_argument("--data-dir", type=Path, default=None,
                   help="directory holding the MNIST IDX files (optionally .gz); "
                        "required for mlp2, mlp3 and lenet")
    if not test_only:
        p.add_argument("--train-limit", type=_count, default=10000,
                       help="keep this many training samples after a seeded shuffle (default 10000)")
    p.add_argument("--test-limit", type=_count, default=None if test_only else 2000,
                   help="keep this many test samples after a seeded shuffle"
                        + (" (default: value stored in the checkpoint)" if test_only
                           else " (default 2000)"))


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with status 2 on bad or unknown flags, the config-error code
    parser = argparse.ArgumentParser(prog="efnet", description="Additive (ef-operator) neural networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network and write metrics and a checkpoint")
    p.add_argument("--arch", choices=ARCHS, required=True, help="network architecture")
    p.add_argument("--operator", choices=("ef", "classic"), default="ef",
                   help="operator used by the hidden/conv layers (default ef)")
    p.add_argument("--activation", choices=ACTIVATIONS, default=None,
                   help="hidden activation (default: relu, tanh for lenet)")
    p.add_argument("--lr", type=_learning_rate, default=None,
                   help="SGD learning rate (default: 0.01 xor, 0.005 mlp, 0.1 lenet)")
    p.add_argument("--epochs", type=_positive_int, default=None,
                   help="training epochs (default: 1000 xor, 5 mlp, 2 lenet)")
    p.add_argument("--batch-size", type=_positive_int, default=150,
                   help="minibatch size (default 150; xor is always full batch)")
    p.add_argument("--seed", type=_seed, default=0, help="seed for init, shuffling and subsets")
    p.add_argument("--grad-mode", choices=("paper", "sign"), default="paper",
                   help="W-gradient rule of additive layers: 'paper' uses a*x, "
                        "'sign' uses a*sign(x) (default paper)")
    _add_data_flags(p)
    p.add_argument("--metrics", type=Path, default=Path("efnet-metrics.jsonl"),
                   help="metrics log, one JSON line per epoch, overwritten "
                        "(default efnet-metrics.jsonl)")
    p.add_argument("--checkpoint", type=Path, default=Path("efnet-checkpoint.json"),
                   help="where to write the final checkpoint (default efnet-checkpoint.json)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on its test data")
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint written by train")
    _add_data_flags(p, test_only=True)

    p = sub.add_parser("bench", help="compare measured and closed-form operation counts")
    p.add_argument("--seed", type=_seed, default=0, help="seed for the synthetic inputs")

    p = sub.add_parser("verify", help="run the construction fuzz suites")
    p.add_argument("--dims", type=_dims, default=(1, 2, 3, 5),
                   help="input dimensions for the sign-network suite (default 1,2,3,5)")
    p.add_argument("--cases", type=_positive_int, default=1000,
                   help="random cases per dimension (default 1000)")
    p.add_argument("--seed", type=_seed, default=0, help="seed for all three suites")
    return parser


# ---------------------------------------------------------------------------
# data

def _load_data(arch, data_dir, train_limit, test_limit, seed):
    if arch == "xor":
        ds = xor_dataset()
        return ds, ds
    if data_dir is None:
        raise CliError(f"--data-dir is required for --arch {arch}", EXIT_DATA)
    if not data_dir.is_dir():
        raise CliError(f"--data-dir {data_dir} is not a directory", EXIT_DATA)
    try:
        return load_mnist(data_dir, train_limit, test_limit, seed)
    except FileNotFoundError as e:
        raise CliError(f"--data-dir: {e}", EXIT_DATA) from None
    except FormatError as e:
        raise CliError(str(e), EXIT_DATA) from None


def _operator_of(net):
    kinds = {type(layer) for layer in net.layers}
    if kinds & {AdditiveDense, AdditiveConv}:
        return "ef"
    return "classic"


# ---------------------------------------------------------------------------
# commands

def cmd_train(args, out):
    defaults = ARCH_DEFAULTS[args.arch]
    activation = args.activation or defaults["activation"]
    lr = defaults["lr"] if args.lr is None else args.lr
    epochs = args.epochs or defaults["epochs"]
    batch_size = 4 if args.arch == "xor" else args.batch_size
    try:
        cfg = SgdConfig(learning_rate=lr, batch_size=batch_size, epochs=epochs,
                        seed=args.seed, grad_mode=args.grad_mode)
    except ParameterError as e:
        raise CliError(str(e), EXIT_CONFIG) from None
    train, test = _load_data(args.arch, args.data_dir, args.train_limit, args.test_limit, args.seed)
    if len(train) == 0:
        raise CliError("training subset is empty (--train-limit 0)", EXIT_DATA)
    if len(test) == 0:
        test = None
    net = build_network(args.arch, args.operator, activation, args.seed)
    config = {"arch": args.arch, "operator": args.operator, "activation": activation,
              "train_limit": args.train_limit, "test_limit": args.test_limit, **cfg.as_dict()}

    args.metrics.parent.mkdir(parents=True, exist_ok=True)
    args.metrics.write_text("")

    # XOR runs 1000 epochs; only the summary is printed for it
    verbose = args.arch != "xor"

    def sink(m):
        append_metrics(args.metrics, m)
        if not verbose:
            return
        acc = "n/a" if m.test_acc is None else f"{m.test_acc:.4f}"
        print(f"epoch {m.epoch}: loss {m.train_loss:.6f} train_acc {m.train_acc:.4f} "
              f"test_acc {acc}", file=out)

    try:
        net, history = sgd_train(net, train, test, cfg, sink=sink)
    except DivergenceError as e:
        raise CliError(str(e), EXIT_DIVERGENCE) from None
    save_checkpoint(net, args.checkpoint, config)
    last = history[-1]
    acc = last.test_acc if last.test_acc is not None else last.train_acc
    print(f"operator: {args.operator}", file=out)
    print(f"final train loss: {last.train_loss:.6f}", file=out)
    print(f"accuracy: {acc:.4f}", file=out)
    print(f"multiplications: {last.mult_count}", file=out)
    print(f"additions: {last.add_count}", file=out)
    return EXIT_OK


def cmd_eval(args, out):
    try:
        net, config = parse_checkpoint(args.checkpoint.read_text())
    except OSError as e:
        raise CliError(f"--checkpoint: {e.strerror}: {args.checkpoint}", EXIT_DATA) from None
    except FormatError as e:
        raise CliError(f"--checkpoint: {e}", EXIT_DATA) from None
    arch = config.get("arch", "xor" if net.input_size == 2 else "mlp2")
    test_limit = config.get("test_limit") if args.test_limit is None else args.test_limit
    _, test = _load_data(arch, args.data_dir, 0, test_limit, int(config.get("seed", 0)))
    if len(test) == 0:
        raise CliError("evaluation dataset is empty", EXIT_DATA)
    try:
        acc = evaluate(net, test)
        pred = predictions(net, test)
    except ShapeError as e:
        raise CliError(f"checkpoint does not fit the data: {e}", EXIT_DATA) from None
    print(f"operator: {_operator_of(net)}", file=out)
    print(f"samples: {len(test)}", file=out)
    print(f"accuracy: {acc:.4f}", file=out)
    print("confusion (rows = label, columns = prediction):", file=out)
    k = test.n_classes
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (test.labels, pred), 1)
    width = max(5, len(str(conf.max())) + 1)
    print("     " + "".join(f"{j:>{width}}" for j in range(k)), file=out)
    for i in range(k):
        print(f"{i:>5}" + "".join(f"{v:>{width}}" for v in conf[i]), file=out)
    return EXIT_OK


def _bench_rows(seed):
    rng = make_rng(seed)
    rows = []
    for d, M in BENCH_DENSE:
        x = rng.uniform(-1, 1, d)
        for kind, cls, fwd in (("additive_dense", AdditiveDense, additive_dense_forward),
                               ("classic_dense", ClassicDense, classic_dense_forward)):
            layer = cls.init(d, M, "relu", rng)
            with count_ops() as ops:
                fwd(layer, x)
            rows.append((kind, f"d={d} M={M}", M, ops, theoretical_counts(kind, d=d, M=M)))
    for C, K, H, Wd, k in BENCH_CONV:
        img = rng.uniform(-1, 1, (C, H, Wd))
        pos = (H - k + 1) * (Wd - k + 1)
        for kind, cls in (("additive_conv", AdditiveConv), ("classic_conv", ClassicConv)):
            layer = cls.init(K, C, k, "relu", rng)
            with count_ops() as ops:
                if cls is AdditiveConv:
                    additive_conv_forward(layer, img)
                else:
                    layer.forward(img)
            rows.append((kind, f"{C}x{H}x{Wd} -> {K}@{k}x{k}", K * pos, ops,
                         theoretical_counts(kind, d=C * k * k, M=K, positions=pos)))
    img = rng.uniform(-1, 1, (6, 24, 24))
    with count_ops() as ops:
        maxpool2_forward(img)
    rows.append(("maxpool2", "6x24x24", 6 * 144, ops,
                 theoretical_counts("maxpool2", M=6, positions=144)))
    return rows


def cmd_bench(args, out):
    header = (f"{'layer':<15} {'shape':<22} {'mults':>9} {'theory':>9} {'adds':>9} "
              f"{'theory':>9} {'mults/out':>9}  ok")
    print(header, file=out)
    bad = 0
    for kind, shape, n_out, ops, pred in _bench_rows(args.seed):
        ok = ops.matches(pred)
        bad += not ok
        per = ops.mults / n_out
        print(f"{kind:<15} {shape:<22} {ops.mults:>9} {pred.mults:>9} {ops.adds:>9} "
              f"{pred.adds:>9} {per:>9g}  {'yes' if ok else 'NO'}", file=out)
    if bad:
        raise CliError(f"{bad} row(s) differ from the closed-form counts", EXIT_COUNT_MISMATCH)
    print("all measured counts equal the closed-form predictions", file=out)
    return EXIT_OK


def cmd_verify(args, out):
    failed = []
    r = constructions.verify_sign_network(dims=args.dims, cases=args.cases, seed=args.seed)
    print(f"sign network: {'PASS' if r['passed'] else 'FAIL'}  dims={','.join(map(str, r['dims']))} "
          f"cases={r['cases']} checked={r['checked']} exact_mismatches={r['exact_mismatches']} "
          f"float_max_dev={r['float_max_dev']:.3g}", file=out)
    print(f"  boundary (sign(0)=0): checked={r['boundary_checked']} "
          f"mismatches={r['boundary_mismatches']}", file=out)
    if not r["passed"]:
        failed.append("sign network")
    r = constructions.verify_relu_conversion(seed=args.seed)
    print(f"relu conversion: {'PASS' if r['passed'] else 'FAIL'}  nets={r['nets']} "
          f"inputs={r['inputs']} max_dev={r['max_dev']:.3g} "
          f"rewrites_max_dev={r['obs_max_dev']:.3g}", file=out)
    if not r["passed"]:
        failed.append("relu conversion")
    r = constructions.verify_superposition(seed=args.seed)
    print(f"superposition: {'PASS' if r['passed'] else 'FAIL'}  terms=1..{r['max_terms']} "
          f"inputs={r['inputs']} checked={r['checked']} exact_mismatches={r['exact_mismatches']}",
          file=out)
    if not r["passed"]:
        failed.append("superposition")
    if failed:
        raise CliError("failed suites: " + ", ".join(failed), EXIT_VERIFY)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "bench": cmd_bench, "verify": cmd_verify}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except CliError as e:
        print(f"efnet {args.command}: error: {e}", file=sys.stderr)
        return e.code
    except ParameterError as e:
        print(f"efnet {args.command}: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
