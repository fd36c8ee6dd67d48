"""Minibatch SGD and the XOR / MNIST experiment builders."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .counting import OpCounter, count_ops
from .data import Dataset, xor_dataset
from .errors import DivergenceError, ParameterError, ShapeError
from .layers import (Activation, AdditiveConv, AdditiveDense, ClassicConv, ClassicDense,
                     Flatten, GradMode, MaxPool2, as_activation, as_grad_mode)
from .network import Loss, Network
from .tensor import make_rng

OPERATORS = ("ef", "classic")
MLP_WIDTHS = {2: (300, 100), 3: (300, 150, 60)}
XOR_HIDDEN = 10
LENET_FILTERS = (6, 16)
LENET_KERNEL = 5

INIT_STREAM = 0
SHUFFLE_STREAM = 1


@dataclass
class SgdConfig:
    learning_rate: float = 0.005
    batch_size: int = 150
    epochs: int = 5
    seed: int = 0
    grad_mode: GradMode = GradMode.PAPER_LITERAL

    def __post_init__(self):
        self.grad_mode = as_grad_mode(self.grad_mode)
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ParameterError(f"learning rate must be finite and >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ParameterError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["grad_mode"] = self.grad_mode.value
        return d


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float | None
    mult_count: int
    add_count: int

    def as_dict(self):
        return dataclasses.asdict(self)


def _dense(operator, d, M, activation, rng):
    if operator == "ef":
        return AdditiveDense.init(d, M, activation, rng)
    return ClassicDense.init(d, M, activation, rng)


def _check_operator(operator):
    if operator not in OPERATORS:
        raise ParameterError(f"unknown operator {operator!r}; expected 'ef' or 'classic'")


def build_xor_experiment(operator="ef", seed=0, activation=Activation.RELU):
    """2-10-1 network (chosen operator in the hidden layer, classic output)
    with an MSE loss, and the four XOR points."""
    _check_operator(operator)
    rng = make_rng(seed, INIT_STREAM)
    layers = [_dense(operator, 2, XOR_HIDDEN, as_activation(activation), rng),
              ClassicDense.init(XOR_HIDDEN, 1, Activation.IDENTITY, rng)]
    return Network(layers, loss=Loss.MSE), xor_dataset()


def build_mnist_mlp(operator="ef", hidden_layers=2, activation=Activation.RELU, seed=0):
    """784-input MLP; hidden layers use ``operator``, the 10-way output is classic."""
    _check_operator(operator)
    if hidden_layers not in MLP_WIDTHS:
        raise ParameterError(f"hidden_layers must be 2 or 3, got {hidden_layers}")
    act = as_activation(activation)
    rng = make_rng(seed, INIT_STREAM)
    layers, d = [], 784
    for M in MLP_WIDTHS[hidden_layers]:
        layers.append(_dense(operator, d, M, act, rng))
        d = M
    layers.append(ClassicDense.init(d, 10, Activation.IDENTITY, rng))
    return Network(layers, loss=Loss.CROSS_ENTROPY, input_shape=(784,))


def build_lenet(operator="ef", activation=Activation.RELU, seed=0):
    """conv(6@5x5) - pool - conv(16@5x5) - pool - flatten - classic dense(10)."""
    _check_operator(operator)
    act = as_activation(activation)
    rng = make_rng(seed, INIT_STREAM)
    conv = AdditiveConv if operator == "ef" else ClassicConv
    c1, c2 = LENET_FILTERS
    k = LENET_KERNEL
    layers = [conv.init(c1, 1, k, act, rng), MaxPool2(),
              conv.init(c2, c1, k, act, rng), MaxPool2(), Flatten()]
    flat = c2 * 4 * 4
    layers.append(ClassicDense.init(flat, 10, Activation.IDENTITY, rng))
    return Network(layers, loss=Loss.CROSS_ENTROPY, input_shape=(1, 28, 28))


def build_network(arch, operator="ef", activation=Activation.RELU, seed=0):
    if arch == "xor":
        return build_xor_experiment(operator, seed, activation)[0]
    if arch == "mlp2":
        return build_mnist_mlp(operator, 2, activation, seed)
    if arch == "mlp3":
        return build_mnist_mlp(operator, 3, activation, seed)
    if arch == "lenet":
        return build_lenet(operator, activation, seed)
    raise ParameterError(f"unknown architecture {arch!r}")


def _check_data(net, data):
    if data.samples.shape[1] != net.input_size:
        raise ShapeError(f"dataset has {data.samples.shape[1]} features, "
                         f"network expects {net.input_size}")


def evaluate(net: Network, data: Dataset, batch_size: int = 1000) -> float:
    """Fraction of samples classified correctly (argmax, or > 0.5 for one output)."""
    _check_data(net, data)
    if len(data) == 0:
        raise ParameterError("cannot evaluate on an empty dataset")
    correct = 0
    for X, y in data.batches(batch_size):
        correct += int(np.sum(net.classify(net.predict(X)) == y))
    return correct / len(data)


def predictions(net: Network, data: Dataset, batch_size: int = 1000) -> np.ndarray:
    return np.concatenate([net.classify(net.predict(X)) for X, _ in data.batches(batch_size)])


def batch_gradients(net: Network, X, y, n_classes, mode=GradMode.PAPER_LITERAL):
    """Loss and parameter gradients of the batch-mean loss."""
    out, caches = net.forward(X)
    loss, g = net.loss_and_grad(out, net.targets(y, n_classes))
    grads, _ = net.backward(caches, g, mode)
    return loss, grads, out


def sgd_train(net: Network, train: Dataset, test: Dataset | None, cfg: SgdConfig, sink=None):
    """Train ``net`` in place with minibatch SGD.

    Every epoch shuffles with a generator derived from ``cfg.seed``, so equal
    inputs reproduce the metric history bit for bit. ``sink`` (if given) is
    called with each :class:`EpochMetrics`. Returns ``(net, history)``.
    """
    _check_data(net, train)
    if test is not None:
        _check_data(net, test)
    if len(train) == 0:
        raise ParameterError("empty training set")
    rng = make_rng(cfg.seed, SHUFFLE_STREAM)
    totals = OpCounter()
    history = []
    for epoch in range(1, cfg.epochs + 1):
        loss_sum, correct = 0.0, 0
        # overflow shows up as a non-finite loss, reported as divergence below
        with count_ops(totals), np.errstate(over="ignore", invalid="ignore"):
            for k, (X, y) in enumerate(train.batches(cfg.batch_size, rng)):
                loss, grads, out = batch_gradients(net, X, y, train.n_classes, cfg.grad_mode)
                if not math.isfinite(loss):
                    raise DivergenceError(epoch, k, loss)
                net.sgd_step(grads, cfg.learning_rate)
                loss_sum += loss * len(y)
                correct += int(np.sum(net.classify(out) == y))
        m = EpochMetrics(epoch=epoch,
                         train_loss=loss_sum / len(train),
                         train_acc=correct / len(train),
                         test_acc=evaluate(net, test) if test is not None and len(test) else None,
                         mult_count=totals.mults, add_count=totals.adds)
        history.append(m)
        if sink is not None:
            sink(m)
    return net, history
