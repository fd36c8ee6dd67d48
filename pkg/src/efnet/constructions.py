"""Explicit additive networks from the universal-approximation argument.

* :func:`build_sign_network` -- four identity-activation additive layers that
  compute ``sign(y.x + bias)`` (printed for d = 2; generalised here with
  three layer-1 neurons per input coordinate).
* :func:`negate_layer`, :func:`input_negation_layer`,
  :func:`relu_split_identity` -- the three parameter rewrites used to move
  from identity to ReLU activations.
* :func:`convert_to_relu_network` -- width-doubling conversion of an
  identity-activation additive network into a ReLU one.
* :func:`build_superposition` -- ``sum_i alpha_i sign(y_i.x + theta_i)`` as
  parallel sign networks and one classic linear output layer.

The sign construction is exact in real arithmetic, but float64 evaluation
can miss +/-1 by a few ulps (``|h| + 2`` and ``|h| + 1`` round differently
in the third layer). The ``verify_*`` suites therefore check exactness by
running the very same network on exact rationals via :func:`efnet.network.to_exact`,
and report the float64 deviation separately.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .ef import ef_matmul
from .errors import ParameterError
from .layers import Activation, AdditiveDense, ClassicDense, activate
from .network import Loss, Network, exact_array, rational, to_exact
from .tensor import make_rng


@dataclass
class SignNetSpec:
    y: np.ndarray
    bias: float

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=np.float64))
        if self.y.ndim != 1 or self.y.size < 1:
            raise ParameterError("y must be a non-empty vector")
        if not (np.all(np.isfinite(self.y)) and np.isfinite(self.bias)):
            raise ParameterError("sign-network parameters must be finite")


@dataclass
class SuperpositionSpec:
    """Terms ``(alpha_i, y_i, theta_i)`` of ``G(x) = sum alpha_i sign(y_i.x + theta_i)``."""
    terms: list = field(default_factory=list)

    def __post_init__(self):
        if not self.terms:
            raise ParameterError("a superposition needs at least one term")
        self.terms = [(float(a), np.atleast_1d(np.asarray(y, dtype=np.float64)), float(t))
                      for a, y, t in self.terms]
        dims = {y.size for _, y, _ in self.terms}
        if len(dims) != 1:
            raise ParameterError(f"all y_i must share one dimension, got {sorted(dims)}")

    @property
    def dim(self):
        return self.terms[0][1].size

    def evaluate(self, X):
        """Direct evaluation of ``G`` (float, or exact for object arrays)."""
        X = np.atleast_2d(X)
        exact = X.dtype == object
        total = 0
        for alpha, y, theta in self.terms:
            if exact:
                z = X @ exact_array(y) + rational(theta)
                s = np.array([(v > 0) - (v < 0) for v in z], dtype=object)
                total = total + rational(alpha) * s
            else:
                total = total + alpha * np.sign(X @ y + theta)
        return total


# ---------------------------------------------------------------------------
# sign network

def _sign_layers(y, bias):
    d = y.size
    W1 = np.zeros((d, 3 * d))
    for i in range(d):
        W1[i, 3 * i:3 * i + 3] = (1.0, 1.0, 2.0)
    a1 = np.repeat(y, 3)
    W2 = np.tile([1.0, 1.0, -2.0], d)[:, None]
    ident = Activation.IDENTITY
    return [
        AdditiveDense(W1, a1, np.zeros(3 * d), ident),
        AdditiveDense(W2, np.ones(1), np.array([bias], dtype=np.float64), ident),
        AdditiveDense(np.array([[2.0, 1.0]]), np.ones(2), np.zeros(2), ident),
        AdditiveDense(np.array([[1.0], [-1.0]]), np.ones(1), np.zeros(1), ident),
    ]


def build_sign_network(spec: SignNetSpec) -> Network:
    """Four-layer identity-activation additive network computing ``sign(y.x + bias)``.

    Layer 1 sends each ``x_i`` to ``y_i (x_i + s), y_i (x_i + s), y_i (x_i + 2s)``
    with ``s = sign(x_i)``; layer 2 recombines them to ``y.x + bias``; layers 3
    and 4 turn ``h`` into ``(h + 2 sign h, h + sign h)`` and then ``sign h``.
    """
    return Network(_sign_layers(spec.y, float(spec.bias)), loss=Loss.MSE,
                   input_shape=(spec.y.size,))


# ---------------------------------------------------------------------------
# layer rewrites and ReLU conversion

def _identity_copy(layer, W, b):
    return AdditiveDense(W, layer.a.copy(), b, layer.activation)


def negate_layer(layer: AdditiveDense) -> AdditiveDense:
    """Layer computing ``-g(x)``: same scale, negated weights and bias."""
    return _identity_copy(layer, -layer.W, -layer.b)


def input_negation_layer(layer: AdditiveDense) -> AdditiveDense:
    """Layer ``g''`` with ``g''(-x) == g(x)``: negated weights, same bias."""
    return _identity_copy(layer, -layer.W, layer.b.copy())


def relu_split_identity(layer: AdditiveDense, x):
    """Both sides of ``a*(relu(x) <> W + relu(-x) <> -W) + b == a*(x <> W) + b``.

    Returns ``(split, direct)`` for an identity-activation layer.
    """
    if layer.activation is not Activation.IDENTITY:
        raise ParameterError("relu_split_identity needs an identity-activation layer")
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    pos = activate(Activation.RELU, X)
    neg = activate(Activation.RELU, -X)
    split = layer.a * (ef_matmul(pos, layer.W) + ef_matmul(neg, -layer.W)) + layer.b
    direct = layer.a * ef_matmul(X, layer.W) + layer.b
    if np.ndim(x) == 1:
        return split[0], direct[0]
    return split, direct


def convert_to_relu_network(net: Network, readout=None) -> Network:
    """ReLU network computing the same function as an identity-activation one.

    Each layer is widened to emit ``(g, -g)``; after ReLU the next layer reads
    ``relu(g)`` with weights ``W`` and ``relu(-g)`` with ``-W``, so it sees
    exactly ``g <> W``. A classic linear readout ``[I; -I]`` returns
    ``relu(g) - relu(-g) = g`` at the end. ``readout`` overrides that final
    ``(2M, k)`` weight matrix.
    """
    for i, layer in enumerate(net.layers):
        if not isinstance(layer, AdditiveDense) or layer.activation is not Activation.IDENTITY:
            raise ParameterError(f"layer {i} is not an identity-activation additive dense layer")
    layers = []
    for k, layer in enumerate(net.layers):
        W, a, b = layer.W, layer.a, layer.b
        g_cols, neg_cols = W, -W
        if k > 0:
            # input is (relu(h), relu(-h)) from the previous doubled layer
            g_cols = np.vstack([W, -W])
            neg_cols = np.vstack([-W, W])
        layers.append(AdditiveDense(np.hstack([g_cols, neg_cols]), np.concatenate([a, a]),
                                    np.concatenate([b, -b]), Activation.RELU))
    M = net.layers[-1].W.shape[1]
    if readout is None:
        readout = np.vstack([np.eye(M), -np.eye(M)])
    readout = np.asarray(readout, dtype=np.float64)
    layers.append(ClassicDense(readout, np.zeros(readout.shape[1]), Activation.IDENTITY))
    return Network(layers, loss=net.loss, input_shape=net.input_shape)


# ---------------------------------------------------------------------------
# superposition

def _block_diag(blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def _parallel_sign_layers(spec: SuperpositionSpec):
    """Side-by-side sign networks; zero cross weights contribute nothing
    because ``ef(x, 0) == 0``."""
    stacks = [_sign_layers(y, theta) for _, y, theta in spec.terms]
    layers = []
    for depth in range(4):
        parts = [s[depth] for s in stacks]
        W = (np.hstack([p.W for p in parts]) if depth == 0
             else _block_diag([p.W for p in parts]))
        layers.append(AdditiveDense(W, np.concatenate([p.a for p in parts]),
                                    np.concatenate([p.b for p in parts]), Activation.IDENTITY))
    return layers


def build_superposition(spec: SuperpositionSpec, relu: bool = False) -> Network:
    """Network computing ``sum_i alpha_i sign(y_i.x + theta_i)``.

    The ``alpha_i`` live only in the final classic linear layer. With
    ``relu=True`` the sign sub-networks are converted to ReLU activations.
    """
    alphas = np.array([a for a, _, _ in spec.terms])[:, None]
    hidden = _parallel_sign_layers(spec)
    if relu:
        ident = Network(hidden, loss=Loss.MSE, input_shape=(spec.dim,))
        return convert_to_relu_network(ident, readout=np.vstack([alphas, -alphas]))
    out = ClassicDense(alphas, np.zeros(1), Activation.IDENTITY)
    return Network(hidden + [out], loss=Loss.MSE, input_shape=(spec.dim,))


# ---------------------------------------------------------------------------
# verification suites

def _exact_sign(z):
    return (z > 0) - (z < 0)


def verify_sign_network(dims=(1, 2, 3, 5), cases=1000, seed=0, band=1e-9):
    """Fuzz the sign network against ``sign(y.x + b)``.

    Off-boundary cases are checked for exact equality in rational arithmetic;
    boundary cases (integer data with ``y.x + b == 0``) must give exactly 0.
    """
    rng = make_rng(seed, stream=100)
    report = {"dims": list(dims), "cases": cases, "checked": 0, "skipped_band": 0,
              "exact_mismatches": 0, "float_sign_mismatches": 0, "float_max_dev": 0.0,
              "boundary_checked": 0, "boundary_mismatches": 0}
    for d in dims:
        for _ in range(cases):
            y = rng.uniform(-2, 2, d)
            b = float(rng.uniform(-2, 2))
            x = rng.uniform(-2, 2, d)
            z = sum((rational(v) * rational(u) for v, u in zip(y, x)), rational(b))
            if abs(z) <= band:
                report["skipped_band"] += 1
                continue
            net = build_sign_network(SignNetSpec(y, b))
            exact_out = to_exact(net).predict(exact_array(x)[None])[0, 0]
            float_out = float(net.predict(x[None])[0, 0])
            target = _exact_sign(z)
            report["checked"] += 1
            report["exact_mismatches"] += int(exact_out != target)
            report["float_sign_mismatches"] += int(np.sign(float_out) != target)
            report["float_max_dev"] = max(report["float_max_dev"], abs(float_out - target))
        for _ in range(max(cases // 10, 1)):
            y = rng.integers(-8, 9, d).astype(np.float64)
            x = rng.integers(-8, 9, d).astype(np.float64)
            b = -float(y @ x)
            net = build_sign_network(SignNetSpec(y, b))
            outs = (to_exact(net).predict(exact_array(x)[None])[0, 0],
                    float(net.predict(x[None])[0, 0]))
            report["boundary_checked"] += 1
            report["boundary_mismatches"] += int(any(o != 0 for o in outs))
    report["passed"] = (report["exact_mismatches"] == 0 and report["float_sign_mismatches"] == 0
                        and report["boundary_mismatches"] == 0)
    return report


def random_identity_network(rng, d=None, depth=None, max_width=6):
    d = int(rng.integers(1, max_width + 1)) if d is None else d
    depth = int(rng.integers(1, 5)) if depth is None else depth
    layers, width = [], d
    for _ in range(depth):
        M = int(rng.integers(1, max_width + 1))
        layers.append(AdditiveDense(rng.uniform(-1, 1, (width, M)), rng.uniform(-1, 1, M),
                                    rng.uniform(-1, 1, M), Activation.IDENTITY))
        width = M
    return Network(layers, loss=Loss.MSE, input_shape=(d,))


def verify_relu_conversion(nets=100, inputs=100, seed=0, tol=1e-9, obs_tol=1e-12):
    """Converted ReLU networks vs their originals, plus the three layer rewrites."""
    rng = make_rng(seed, stream=200)
    report = {"nets": nets, "inputs": inputs, "max_dev": 0.0, "obs_max_dev": 0.0,
              "width_ok": True}
    for _ in range(nets):
        net = random_identity_network(rng)
        X = rng.uniform(-2, 2, (inputs, net.input_size))
        relu_net = convert_to_relu_network(net)
        report["max_dev"] = max(report["max_dev"],
                                float(np.max(np.abs(relu_net.predict(X) - net.predict(X)))))
        report["width_ok"] &= all(c.W.shape[1] == 2 * o.W.shape[1]
                                  for o, c in zip(net.layers, relu_net.layers))
        layer = net.layers[0]
        g = layer.forward(X)[0]
        obs = [negate_layer(layer).forward(X)[0] + g,
               input_negation_layer(layer).forward(-X)[0] - g,
               np.subtract(*relu_split_identity(layer, X))]
        report["obs_max_dev"] = max(report["obs_max_dev"], *(float(np.max(np.abs(o))) for o in obs))
    report["passed"] = (report["max_dev"] <= tol and report["obs_max_dev"] <= obs_tol
                        and report["width_ok"])
    return report


def random_superposition(rng, d, n_terms):
    return SuperpositionSpec([(float(rng.uniform(-2, 2)), rng.uniform(-1, 1, d),
                               float(rng.uniform(-1, 1))) for _ in range(n_terms)])


def verify_superposition(max_terms=8, inputs=500, d=3, seed=0, band=1e-9):
    """Superposition networks (identity and ReLU variants) vs direct evaluation of G.

    Exact arithmetic off-boundary; the float64 deviation is reported.
    """
    rng = make_rng(seed, stream=300)
    report = {"max_terms": max_terms, "inputs": inputs, "checked": 0, "exact_mismatches": 0,
              "float_max_dev": 0.0}
    for n in range(1, max_terms + 1):
        spec = random_superposition(rng, d, n)
        X = rng.uniform(-1, 1, (inputs, d))
        Xe = exact_array(X)
        margins = np.array([[abs(v) for v in Xe @ exact_array(y) + rational(t)]
                            for _, y, t in spec.terms])
        keep = np.all(margins > band, axis=0)
        direct = spec.evaluate(Xe[keep])
        for relu in (False, True):
            net = build_superposition(spec, relu=relu)
            got = to_exact(net).predict(Xe[keep])[:, 0]
            report["checked"] += int(keep.sum())
            report["exact_mismatches"] += int(sum(g != t for g, t in zip(got, direct)))
            fdev = np.abs(net.predict(X[keep])[:, 0] - spec.evaluate(X[keep]))
            report["float_max_dev"] = max(report["float_max_dev"], float(fdev.max(initial=0.0)))
    report["passed"] = report["exact_mismatches"] == 0
    return report
