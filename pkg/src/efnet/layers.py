"""Additive (ef) and classic (affine) layers with forward and backward passes.

An additive layer computes ``f(a * (x <> W) + b)``; a classic layer computes
``f(x @ W + b)``. All layers take batches whose first axis is the sample
axis. Backward passes return gradients summed over the batch, so a loss that
averages over samples yields averaged parameter gradients.

Derivatives of the ef product w.r.t. its operands contain delta terms at
zero; they are dropped. ``GradMode`` selects the weight gradient:
``PAPER_LITERAL`` uses ``a_j * x_i`` and ``SIGN_CONSISTENT`` uses
``a_j * sign(x_i)``, which is the true derivative away from zero.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import counting
from .ef import ef_matmul, sign_array
from .errors import ParameterError, ShapeError
from .tensor import DTYPE, glorot_range


class Activation(str, enum.Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"


class GradMode(str, enum.Enum):
    PAPER_LITERAL = "paper"
    SIGN_CONSISTENT = "sign"


def as_activation(value) -> Activation:
    try:
        return Activation(value)
    except ValueError:
        raise ParameterError(f"unknown activation {value!r}") from None


def as_grad_mode(value) -> GradMode:
    try:
        return GradMode(value)
    except ValueError:
        raise ParameterError(f"unknown gradient mode {value!r}") from None


def _sigmoid(s):
    # split by sign so exp never overflows
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(kind: Activation, s: np.ndarray) -> np.ndarray:
    if kind is Activation.IDENTITY:
        return s
    if kind is Activation.RELU:
        return np.where(s > 0, s, s - s)
    if kind is Activation.TANH:
        return np.tanh(s)
    if kind is Activation.SIGMOID:
        return _sigmoid(s)
    raise ParameterError(f"unknown activation {kind!r}")


def activation_grad(kind: Activation, s: np.ndarray) -> np.ndarray:
    """Derivative of the activation at ``s``; ReLU'(0) is taken as 0."""
    if kind is Activation.IDENTITY:
        return np.ones_like(s)
    if kind is Activation.RELU:
        return (s > 0).astype(DTYPE)
    if kind is Activation.TANH:
        t = np.tanh(s)
        return 1.0 - t * t
    if kind is Activation.SIGMOID:
        p = _sigmoid(s)
        return p * (1.0 - p)
    raise ParameterError(f"unknown activation {kind!r}")


def _batched(x, width, what):
    x = np.asarray(x)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != width:
        raise ShapeError(f"{what}: expected input width {width}, got shape {x.shape}")
    return X, single


@dataclass
class LayerCache:
    """Values recorded by a forward pass for the matching backward pass."""
    x: np.ndarray
    s: np.ndarray
    u: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# dense layers

@dataclass
class AdditiveDense:
    """``f(a * (x <> W) + b)`` with ``W`` of shape ``(d, M)``.

    With ``unit_scale_fast_path`` set and ``a`` all ones, the scaling step is
    skipped and the layer performs no multiplications at all.
    """
    W: np.ndarray
    a: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.IDENTITY
    unit_scale_fast_path: bool = False

    kind = "additive_dense"
    param_names = ("W", "a", "b")

    def __post_init__(self):
        self.activation = as_activation(self.activation)
        if self.W.ndim != 2 or self.a.shape != (self.W.shape[1],) or self.b.shape != self.a.shape:
            raise ShapeError(f"inconsistent additive layer shapes W {self.W.shape}, "
                             f"a {self.a.shape}, b {self.b.shape}")

    @classmethod
    def init(cls, d, M, activation=Activation.RELU, rng=None, **kw):
        r = glorot_range(d, M)
        return cls(W=rng.uniform(-r, r, size=(d, M)), a=np.ones(M), b=np.zeros(M),
                   activation=activation, **kw)

    @property
    def shape(self):
        return self.W.shape

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.W.shape[0],):
            raise ShapeError(f"additive dense layer expects ({self.W.shape[0]},), got {in_shape}")
        return (self.W.shape[1],)

    def forward(self, X):
        return additive_dense_forward(self, X)

    def backward(self, cache, upstream, mode=GradMode.PAPER_LITERAL):
        gW, ga, gb, gx = additive_dense_backward(self, cache, upstream, mode)
        return {"W": gW, "a": ga, "b": gb}, gx


def _skip_scaling(layer):
    return layer.unit_scale_fast_path and np.all(layer.a == 1)


def additive_dense_forward(layer: AdditiveDense, x):
    """Forward pass; returns ``(y, cache)``. ``x`` may be one sample or a batch."""
    X, single = _batched(x, layer.W.shape[0], "additive dense forward")
    U = ef_matmul(X, layer.W)
    n = U.size
    if _skip_scaling(layer):
        S = U + layer.b
    else:
        S = layer.a * U + layer.b
        counting.record(mults=n)
    counting.record(adds=n)
    Y = activate(layer.activation, S)
    cache = LayerCache(x=X, s=S, u=U, extra={"single": single})
    return (Y[0] if single else Y), cache


def additive_dense_backward(layer: AdditiveDense, cache: LayerCache, upstream,
                            mode=GradMode.PAPER_LITERAL):
    """Gradients ``(gW, ga, gb, gx)`` of an additive dense layer."""
    mode = as_grad_mode(mode)
    G = np.asarray(upstream, dtype=DTYPE)
    if cache.extra.get("single") and G.ndim == 1:
        G = G[None, :]
    if G.shape != cache.s.shape:
        raise ShapeError(f"upstream shape {np.shape(upstream)} does not match layer output {cache.s.shape}")
    B, d = cache.x.shape
    M = layer.W.shape[1]
    G = G * activation_grad(layer.activation, cache.s)
    ga = np.sum(G * cache.u, axis=0)
    gb = np.sum(G, axis=0)
    Ga = G * layer.a
    gx = Ga @ sign_array(layer.W).T
    if mode is GradMode.PAPER_LITERAL:
        gW = cache.x.T @ Ga
        w_mults = B * d * M
    else:
        gW = sign_array(cache.x).T @ Ga
        w_mults = 0
    counting.record(mults=2 * B * M + w_mults,
                    adds=B * d * max(M - 1, 0) + d * M * max(B - 1, 0) + 2 * M * max(B - 1, 0))
    if cache.extra.get("single"):
        gx = gx[0]
    return gW, ga, gb, gx


@dataclass
class ClassicDense:
    """``f(x @ W + b)``."""
    W: np.ndarray
    b: np.ndarray
    activation: Activation = Activation.IDENTITY

    kind = "classic_dense"
    param_names = ("W", "b")

    def __post_init__(self):
        self.activation = as_activation(self.activation)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[1],):
            raise ShapeError(f"inconsistent classic layer shapes W {self.W.shape}, b {self.b.shape}")

    @classmethod
    def init(cls, d, M, activation=Activation.RELU, rng=None):
        r = glorot_range(d, M)
        return cls(W=rng.uniform(-r, r, size=(d, M)), b=np.zeros(M), activation=activation)

    @property
    def shape(self):
        return self.W.shape

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.W.shape[0],):
            raise ShapeError(f"classic dense layer expects ({self.W.shape[0]},), got {in_shape}")
        return (self.W.shape[1],)

    def forward(self, X):
        return classic_dense_forward(self, X)

    def backward(self, cache, upstream, mode=GradMode.PAPER_LITERAL):
        gW, gb, gx = classic_dense_backward(self, cache, upstream)
        return {"W": gW, "b": gb}, gx


def classic_dense_forward(layer: ClassicDense, x):
    X, single = _batched(x, layer.W.shape[0], "classic dense forward")
    S = X @ layer.W + layer.b
    B, d = X.shape
    counting.record(mults=B * d * layer.W.shape[1], adds=B * d * layer.W.shape[1])
    Y = activate(layer.activation, S)
    cache = LayerCache(x=X, s=S, extra={"single": single})
    return (Y[0] if single else Y), cache


def classic_dense_backward(layer: ClassicDense, cache: LayerCache, upstream):
    """Exact gradients ``(gW, gb, gx)`` of the affine layer."""
    G = np.asarray(upstream, dtype=DTYPE)
    if cache.extra.get("single") and G.ndim == 1:
        G = G[None, :]
    if G.shape != cache.s.shape:
        raise ShapeError(f"upstream shape {np.shape(upstream)} does not match layer output {cache.s.shape}")
    B, d = cache.x.shape
    M = layer.W.shape[1]
    G = G * activation_grad(layer.activation, cache.s)
    gW = cache.x.T @ G
    gb = np.sum(G, axis=0)
    gx = G @ layer.W.T
    counting.record(mults=2 * B * d * M,
                    adds=B * d * max(M - 1, 0) + d * M * max(B - 1, 0) + M * max(B - 1, 0))
    if cache.extra.get("single"):
        gx = gx[0]
    return gW, gb, gx


# ---------------------------------------------------------------------------
# convolution

def _as_image_batch(x, channels, what):
    x = np.asarray(x)
    single = x.ndim == 3
    X = x[None] if single else x
    if X.ndim != 4 or X.shape[1] != channels:
        raise ShapeError(f"{what}: expected (B, {channels}, H, W) input, got shape {x.shape}")
    return X, single


def _im2col(X, kh, kw, stride):
    """Patches as rows: ``(B*Ho*Wo, C*kh*kw)``, ordered (b, i, j)."""
    B, C, H, Wd = X.shape
    if H < kh or Wd < kw:
        raise ShapeError(f"input {H}x{Wd} smaller than kernel {kh}x{kw}")
    win = sliding_window_view(X, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    P = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    return P, Ho, Wo


def _col2im(gP, x_shape, kh, kw, stride, Ho, Wo):
    B, C, H, Wd = x_shape
    g = gP.reshape(B, Ho, Wo, C, kh, kw)
    gx = np.zeros(x_shape, dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += \
                g[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return gx


@dataclass
class _ConvBase:
    kernels: np.ndarray  # (K, C, kh, kw)
    b: np.ndarray
    stride: int = 1
    activation: Activation = Activation.RELU

    def __post_init__(self):
        self.activation = as_activation(self.activation)
        if self.kernels.ndim != 4 or self.b.shape != (self.kernels.shape[0],):
            raise ShapeError(f"inconsistent conv shapes kernels {self.kernels.shape}, b {self.b.shape}")
        if self.stride < 1:
            raise ParameterError("stride must be >= 1")

    @property
    def n_filters(self):
        return self.kernels.shape[0]

    def kernel_matrix(self):
        """Kernels flattened to columns, shape ``(C*kh*kw, K)``."""
        return self.kernels.reshape(self.n_filters, -1).T

    def output_shape(self, in_shape):
        K, C, kh, kw = self.kernels.shape
        if len(in_shape) != 3 or in_shape[0] != C:
            raise ShapeError(f"conv layer expects ({C}, H, W), got {in_shape}")
        _, H, Wd = in_shape
        if H < kh or Wd < kw:
            raise ShapeError(f"input {H}x{Wd} smaller than kernel {kh}x{kw}")
        return (K, (H - kh) // self.stride + 1, (Wd - kw) // self.stride + 1)

    def _unpack_upstream(self, cache, upstream):
        G = np.asarray(upstream, dtype=DTYPE)
        if cache.extra["single"] and G.ndim == 3:
            G = G[None]
        B, Ho, Wo = cache.extra["B"], cache.extra["Ho"], cache.extra["Wo"]
        if G.shape != (B, self.n_filters, Ho, Wo):
            raise ShapeError(f"upstream shape {np.shape(upstream)} does not match conv output")
        G = G.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, self.n_filters)
        return G * activation_grad(self.activation, cache.s)

    def _pack_output(self, S, B, Ho, Wo, single):
        Y = activate(self.activation, S).reshape(B, Ho, Wo, self.n_filters).transpose(0, 3, 1, 2)
        return Y[0] if single else Y


@dataclass
class AdditiveConv(_ConvBase):
    """Convolution whose receptive-field products are ef products.

    Output channel ``j`` at each position is
    ``f(a[j] * (patch <> kernel_j) + b[j])``.
    """
    a: np.ndarray = None

    kind = "additive_conv"
    param_names = ("kernels", "a", "b")

    def __post_init__(self):
        if self.a is None:
            self.a = np.ones_like(self.b)
        super().__post_init__()
        if self.a.shape != self.b.shape:
            raise ShapeError(f"scale vector shape {self.a.shape} != bias shape {self.b.shape}")

    @classmethod
    def init(cls, n_filters, in_channels, k, activation=Activation.RELU, rng=None, stride=1):
        d = in_channels * k * k
        r = glorot_range(d, n_filters)
        return cls(kernels=rng.uniform(-r, r, size=(n_filters, in_channels, k, k)),
                   b=np.zeros(n_filters), a=np.ones(n_filters), stride=stride,
                   activation=activation)

    def forward(self, X):
        return additive_conv_forward(self, X)

    def backward(self, cache, upstream, mode=GradMode.PAPER_LITERAL):
        return additive_conv_backward(self, cache, upstream, mode)


def additive_conv_forward(layer: AdditiveConv, img):
    K, C, kh, kw = layer.kernels.shape
    X, single = _as_image_batch(img, C, "additive conv forward")
    P, Ho, Wo = _im2col(X, kh, kw, layer.stride)
    U = ef_matmul(P, layer.kernel_matrix())
    S = layer.a * U + layer.b
    counting.record(mults=U.size, adds=U.size)
    cache = LayerCache(x=P, s=S, u=U, extra={"single": single, "B": X.shape[0], "Ho": Ho,
                                             "Wo": Wo, "x_shape": X.shape})
    return layer._pack_output(S, X.shape[0], Ho, Wo, single), cache


def additive_conv_backward(layer: AdditiveConv, cache: LayerCache, upstream,
                           mode=GradMode.PAPER_LITERAL):
    """Dense-layer gradient rules applied per patch, accumulated over positions.

    Returns ``({"kernels", "a", "b"}, gx)``.
    """
    mode = as_grad_mode(mode)
    G = layer._unpack_upstream(cache, upstream)
    P = cache.x
    Kmat = layer.kernel_matrix()
    ga = np.sum(G * cache.u, axis=0)
    gb = np.sum(G, axis=0)
    Ga = G * layer.a
    gP = Ga @ sign_array(Kmat).T
    if mode is GradMode.PAPER_LITERAL:
        gK = P.T @ Ga
        w_mults = P.shape[0] * P.shape[1] * Kmat.shape[1]
    else:
        gK = sign_array(P).T @ Ga
        w_mults = 0
    n, d = P.shape
    K = Kmat.shape[1]
    counting.record(mults=2 * n * K + w_mults,
                    adds=n * d * max(K - 1, 0) + d * K * max(n - 1, 0) + 2 * K * max(n - 1, 0))
    _, kh, kw = layer.kernels.shape[1:]
    gx = _col2im(gP, cache.extra["x_shape"], kh, kw, layer.stride, cache.extra["Ho"], cache.extra["Wo"])
    if cache.extra["single"]:
        gx = gx[0]
    return {"kernels": gK.T.reshape(layer.kernels.shape), "a": ga, "b": gb}, gx


@dataclass
class ClassicConv(_ConvBase):
    kind = "classic_conv"
    param_names = ("kernels", "b")

    @classmethod
    def init(cls, n_filters, in_channels, k, activation=Activation.RELU, rng=None, stride=1):
        d = in_channels * k * k
        r = glorot_range(d, n_filters)
        return cls(kernels=rng.uniform(-r, r, size=(n_filters, in_channels, k, k)),
                   b=np.zeros(n_filters), stride=stride, activation=activation)

    def forward(self, img):
        K, C, kh, kw = self.kernels.shape
        X, single = _as_image_batch(img, C, "classic conv forward")
        P, Ho, Wo = _im2col(X, kh, kw, self.stride)
        S = P @ self.kernel_matrix() + self.b
        counting.record(mults=S.size * P.shape[1], adds=S.size * P.shape[1])
        cache = LayerCache(x=P, s=S, extra={"single": single, "B": X.shape[0], "Ho": Ho,
                                            "Wo": Wo, "x_shape": X.shape})
        return self._pack_output(S, X.shape[0], Ho, Wo, single), cache

    def backward(self, cache, upstream, mode=GradMode.PAPER_LITERAL):
        G = self._unpack_upstream(cache, upstream)
        P = cache.x
        Kmat = self.kernel_matrix()
        gK = P.T @ G
        gb = np.sum(G, axis=0)
        gP = G @ Kmat.T
        n, d = P.shape
        K = Kmat.shape[1]
        counting.record(mults=2 * n * d * K,
                        adds=n * d * max(K - 1, 0) + d * K * max(n - 1, 0) + K * max(n - 1, 0))
        _, kh, kw = self.kernels.shape[1:]
        gx = _col2im(gP, cache.extra["x_shape"], kh, kw, self.stride, cache.extra["Ho"], cache.extra["Wo"])
        if cache.extra["single"]:
            gx = gx[0]
        return {"kernels": gK.T.reshape(self.kernels.shape), "b": gb}, gx


# ---------------------------------------------------------------------------
# parameter-free layers

class MaxPool2:
    """Non-overlapping 2x2 max pooling; backward routes to the (first) argmax."""
    kind = "maxpool2"
    param_names = ()

    def output_shape(self, in_shape):
        C, H, Wd = in_shape
        if H % 2 or Wd % 2:
            raise ShapeError(f"max-pooling needs even spatial dims, got {H}x{Wd}")
        return (C, H // 2, Wd // 2)

    def forward(self, X):
        return maxpool2_forward(X)

    def backward(self, cache, upstream, mode=None):
        return {}, maxpool2_backward(cache, upstream)


def maxpool2_forward(x):
    x = np.asarray(x)
    single = x.ndim == 3
    X = x[None] if single else x
    if X.ndim != 4:
        raise ShapeError(f"max-pooling expects (B, C, H, W), got {x.shape}")
    B, C, H, Wd = X.shape
    if H % 2 or Wd % 2:
        raise ShapeError(f"max-pooling needs even spatial dims, got {H}x{Wd}")
    win = X.reshape(B, C, H // 2, 2, Wd // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, Wd // 2, 4)
    idx = np.argmax(win, axis=-1)
    Y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    counting.record(compares=3 * Y.size)
    cache = LayerCache(x=X, s=Y, extra={"idx": idx, "single": single})
    return (Y[0] if single else Y), cache


def maxpool2_backward(cache, upstream):
    G = np.asarray(upstream, dtype=DTYPE)
    if cache.extra["single"] and G.ndim == 3:
        G = G[None]
    idx = cache.extra["idx"]
    if G.shape != idx.shape:
        raise ShapeError(f"upstream shape {G.shape} does not match pooled output {idx.shape}")
    B, C, H, Wd = cache.x.shape
    win = np.zeros(idx.shape + (4,), dtype=DTYPE)
    np.put_along_axis(win, idx[..., None], G[..., None], axis=-1)
    gx = win.reshape(B, C, H // 2, Wd // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, Wd)
    return gx[0] if cache.extra["single"] else gx


class Flatten:
    kind = "flatten"
    param_names = ()

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, X):
        return X.reshape(X.shape[0], -1), LayerCache(x=None, s=None, extra={"shape": X.shape})

    def backward(self, cache, upstream, mode=None):
        return {}, np.asarray(upstream).reshape(cache.extra["shape"])


# ---------------------------------------------------------------------------
# losses

def softmax_cross_entropy(logits, onehot):
    """Mean cross-entropy of a softmax and its gradient w.r.t. the logits.

    Accepts one sample (1-d) or a batch (2-d); for a batch the loss is the
    sample mean and the gradient is ``(p - y) / B``.
    """
    Z = np.asarray(logits, dtype=DTYPE)
    Y = np.asarray(onehot, dtype=DTYPE)
    if Z.shape != Y.shape:
        raise ShapeError(f"logits {Z.shape} and targets {Y.shape} differ in shape")
    single = Z.ndim == 1
    if single:
        Z, Y = Z[None], Y[None]
    if not (np.all((Y == 0) | (Y == 1)) and np.all(Y.sum(axis=1) == 1)):
        raise ParameterError("targets must be one-hot rows")
    shifted = Z - Z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_p = shifted - log_norm
    B = Z.shape[0]
    loss = float(-np.sum(Y * log_p) / B)
    grad = (np.exp(log_p) - Y) / B
    return loss, (grad[0] if single else grad)


def mse_loss(pred, target):
    """``mean((pred - target)**2)`` over all elements, and its gradient."""
    P = np.asarray(pred, dtype=DTYPE)
    T = np.asarray(target, dtype=DTYPE)
    if P.shape != T.shape:
        raise ShapeError(f"prediction {P.shape} and target {T.shape} differ in shape")
    n = P.size
    r = P - T
    return float(np.sum(r * r) / n), (2.0 / n) * r
