"""Sequential networks built from the layers in :mod:`efnet.layers`."""
from __future__ import annotations

import copy
import dataclasses
import enum
from dataclasses import dataclass
from fractions import Fraction

try:
    from gmpy2 import mpq as _rational
except ImportError:  # pragma: no cover
    _rational = Fraction

import numpy as np

from .errors import ParameterError, ShapeError
from .layers import GradMode, mse_loss, softmax_cross_entropy


class Loss(str, enum.Enum):
    CROSS_ENTROPY = "cross_entropy"
    MSE = "mse"


@dataclass
class Network:
    """An ordered stack of layers and the loss it is trained with.

    ``input_shape`` is the per-sample shape the first layer expects; flat
    samples are reshaped to it (e.g. ``(784,)`` rows to ``(1, 28, 28)``).
    """
    layers: list
    loss: Loss = Loss.CROSS_ENTROPY
    input_shape: tuple = None

    def __post_init__(self):
        self.loss = Loss(self.loss)
        if self.input_shape is None:
            self.input_shape = (self.layers[0].W.shape[0],)
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.output_shape = self.check_shapes()

    def check_shapes(self):
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as e:
                raise ShapeError(f"layer {i} ({layer.kind}): {e}") from None
        if len(shape) != 1:
            raise ShapeError(f"network output must be flat, got {shape}")
        return shape

    @property
    def input_size(self):
        return int(np.prod(self.input_shape))

    @property
    def n_outputs(self):
        return self.output_shape[0]

    def _reshape_input(self, X):
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None]
        if X.shape[1:] == self.input_shape:
            return X
        if X.ndim == 2 and X.shape[1] == self.input_size:
            return X.reshape((X.shape[0],) + self.input_shape)
        raise ShapeError(f"input of shape {X.shape} does not fit network input {self.input_shape}")

    def forward(self, X):
        """Batch forward pass returning ``(outputs, caches)``."""
        h = self._reshape_input(X)
        caches = []
        for layer in self.layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        return h, caches

    def predict(self, X):
        return self.forward(X)[0]

    __call__ = predict

    def backward(self, caches, grad_out, mode=GradMode.PAPER_LITERAL):
        """Per-layer gradient dicts, in layer order, and the input gradient."""
        grads = [None] * len(self.layers)
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            grads[i], g = self.layers[i].backward(caches[i], g, mode)
        return grads, g

    def loss_and_grad(self, outputs, targets):
        if self.loss is Loss.CROSS_ENTROPY:
            return softmax_cross_entropy(outputs, targets)
        return mse_loss(outputs, targets)

    def targets(self, labels, n_classes):
        """Training targets for integer labels: one-hot, or the label itself
        for a single-output regression network."""
        labels = np.asarray(labels)
        if self.n_outputs == 1:
            return labels.astype(np.float64)[:, None]
        if self.n_outputs != n_classes:
            raise ShapeError(f"network has {self.n_outputs} outputs for {n_classes} classes")
        out = np.zeros((labels.shape[0], n_classes))
        out[np.arange(labels.shape[0]), labels] = 1.0
        return out

    def classify(self, outputs):
        outputs = np.asarray(outputs)
        if self.n_outputs == 1:
            return (outputs[:, 0] > 0.5).astype(np.int64)
        return np.argmax(outputs, axis=1)

    def parameters(self):
        """Yield ``(layer_index, name, array)`` for every trainable array."""
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                yield i, name, getattr(layer, name)

    def parameter_count(self):
        return sum(p.size for _, _, p in self.parameters())

    def sgd_step(self, grads, lr):
        for i, layer in enumerate(self.layers):
            for name in layer.param_names:
                p = getattr(layer, name)
                p -= lr * grads[i][name]

    def copy(self):
        return copy.deepcopy(self)


def map_parameters(net: Network, fn) -> Network:
    """Copy of ``net`` with ``fn`` applied to every parameter array."""
    layers = []
    for layer in net.layers:
        if layer.param_names:
            layer = dataclasses.replace(layer, **{n: fn(getattr(layer, n)) for n in layer.param_names})
        layers.append(layer)
    return Network(layers, loss=net.loss, input_shape=net.input_shape)


def to_exact(net: Network) -> Network:
    """Copy whose parameters are exact rationals (object arrays).

    Forward passes then run in exact arithmetic, which separates the algebra
    of a construction from float rounding.
    """
    return map_parameters(net, exact_array)


def exact_array(x):
    """Object array of exact rationals equal to the float64 values of ``x``.

    Uses ``gmpy2.mpq`` when installed (much faster), else ``Fraction``.
    """
    return np.frompyfunc(_rational, 1, 1)(np.asarray(x, dtype=np.float64)).astype(object)


def rational(v):
    return _rational(v)


def check_kind(value, allowed, what):
    if value not in allowed:
        raise ParameterError(f"unknown {what} {value!r}; expected one of {sorted(allowed)}")
    return value
