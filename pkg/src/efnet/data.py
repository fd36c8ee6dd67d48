"""Datasets, MNIST IDX parsing, checkpoints and metrics logs.

Checkpoint format (JSON text, version 1)::

    {
      "format": "efnet-checkpoint",
      "version": 1,
      "loss": "cross_entropy" | "mse",
      "input_shape": [784],
      "layers": [
        {"kind": "additive_dense", "activation": "relu",
         "params": {"W": {"shape": [784, 300], "data": [...]}, "a": ..., "b": ...}},
        {"kind": "additive_conv", "activation": "relu", "stride": 1, "params": {...}},
        {"kind": "maxpool2"}, {"kind": "flatten"}, ...
      ],
      "config": {...}            # optional echo of the training configuration
    }

``data`` arrays are row-major and written with Python's shortest
round-tripping float repr, so parameters reload bit for bit.
"""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, ShapeError, VersionError
from .layers import AdditiveConv, AdditiveDense, ClassicConv, ClassicDense, Flatten, MaxPool2
from .network import Network
from .tensor import make_rng

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
CHECKPOINT_VERSION = 1


@dataclass
class Dataset:
    """``samples`` is ``(N, D)`` float64; ``labels`` are ints in ``[0, n_classes)``."""
    samples: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.samples.shape[0]} samples but {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ParameterError(f"labels outside [0, {self.n_classes})")

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx):
        return Dataset(self.samples[idx], self.labels[idx], self.n_classes)

    def batches(self, batch_size, rng=None):
        """Yield ``(samples, labels)`` minibatches, shuffled if ``rng`` is given."""
        n = len(self)
        order = rng.permutation(n) if rng is not None else np.arange(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            yield self.samples[idx], self.labels[idx]


def one_hot(label: int, n_classes: int) -> np.ndarray:
    if not 0 <= label < n_classes:
        raise ParameterError(f"label {label} outside [0, {n_classes})")
    e = np.zeros(n_classes)
    e[label] = 1.0
    return e


def xor_dataset() -> Dataset:
    return Dataset(np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.float64),
                   np.array([0, 1, 1, 0]), 2)


# ---------------------------------------------------------------------------
# IDX

def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw, n_fields, magic, path):
    size = 4 * n_fields
    if len(raw) < size:
        raise FormatError(f"{path}: truncated header, {len(raw)} bytes", offset=len(raw))
    fields = struct.unpack(f">{n_fields}I", raw[:size])
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic number {fields[0]:#010x}, expected {magic:#010x}",
                          offset=0)
    return fields[1:], size


def load_idx_images(path) -> np.ndarray:
    """Read an IDX image file (optionally gzipped) as ``(N, rows*cols)`` in [0, 1]."""
    raw = _read_bytes(path)
    (n, rows, cols), off = _header(raw, 4, IMAGE_MAGIC, path)
    expected = n * rows * cols
    if len(raw) - off != expected:
        raise FormatError(f"{path}: header declares {expected} pixel bytes, file holds {len(raw) - off}",
                          offset=off + min(expected, len(raw) - off))
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=off)
    return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0


def load_idx_labels(path, n_classes: int = 10) -> np.ndarray:
    raw = _read_bytes(path)
    (n,), off = _header(raw, 2, LABEL_MAGIC, path)
    if len(raw) - off != n:
        raise FormatError(f"{path}: header declares {n} labels, file holds {len(raw) - off}",
                          offset=off + min(n, len(raw) - off))
    labels = np.frombuffer(raw, dtype=np.uint8, offset=off).astype(np.int64)
    bad = np.flatnonzero(labels >= n_classes)
    if bad.size:
        raise FormatError(f"{path}: label {labels[bad[0]]} outside [0, {n_classes})",
                          offset=off + int(bad[0]))
    return labels


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist(directory, train_limit=None, test_limit=None, seed=0):
    """Load the standard MNIST files from ``directory``.

    Limits keep the first K samples after a seeded shuffle of each split.
    """
    directory = Path(directory)
    train = Dataset(load_idx_images(_find(directory, "train-images-idx3-ubyte")),
                    load_idx_labels(_find(directory, "train-labels-idx1-ubyte")), 10)
    test = Dataset(load_idx_images(_find(directory, "t10k-images-idx3-ubyte")),
                   load_idx_labels(_find(directory, "t10k-labels-idx1-ubyte")), 10)
    return (_limit(train, train_limit, make_rng(seed, stream=10)),
            _limit(test, test_limit, make_rng(seed, stream=11)))


def _limit(ds, k, rng):
    if k is None:
        return ds
    if k < 0:
        raise ParameterError(f"subset limit must be >= 0, got {k}")
    return ds.subset(rng.permutation(len(ds))[:k])


# ---------------------------------------------------------------------------
# checkpoints

_LAYER_TYPES = {cls.kind: cls for cls in (AdditiveDense, ClassicDense, AdditiveConv,
                                          ClassicConv, MaxPool2, Flatten)}


def _encode_array(a, store):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise FormatError("refusing to save non-finite parameters")
    token = f"@@array{len(store)}@@"
    store.append(json.dumps(a.ravel().tolist(), separators=(",", ":")))
    return {"shape": list(a.shape), "data": token}


def _decode_array(obj):
    try:
        shape = tuple(int(v) for v in obj["shape"])
        data = np.array(obj["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed array entry: {e}") from None
    if data.size != int(np.prod(shape)):
        raise FormatError(f"array declares shape {shape} but holds {data.size} values")
    return data.reshape(shape)


def checkpoint_text(net: Network, config: dict | None = None) -> str:
    store = []
    layers = []
    for layer in net.layers:
        entry = {"kind": layer.kind}
        if hasattr(layer, "activation"):
            entry["activation"] = layer.activation.value
        if hasattr(layer, "stride"):
            entry["stride"] = layer.stride
        if getattr(layer, "unit_scale_fast_path", False):
            entry["unit_scale_fast_path"] = True
        if layer.param_names:
            entry["params"] = {n: _encode_array(getattr(layer, n), store) for n in layer.param_names}
        layers.append(entry)
    doc = {"format": "efnet-checkpoint", "version": CHECKPOINT_VERSION,
           "loss": net.loss.value, "input_shape": list(net.input_shape), "layers": layers}
    if config is not None:
        doc["config"] = config
    text = json.dumps(doc, indent=2)
    for i, blob in enumerate(store):
        text = text.replace(f'"@@array{i}@@"', blob, 1)
    return text + "\n"


def save_checkpoint(net: Network, path, config: dict | None = None) -> None:
    Path(path).write_text(checkpoint_text(net, config))


def parse_checkpoint(text: str) -> tuple[Network, dict]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"checkpoint is not valid JSON: {e.msg}", offset=e.pos) from None
    if not isinstance(doc, dict) or doc.get("format") != "efnet-checkpoint":
        raise FormatError("not an efnet checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {doc.get('version')!r}, "
                           f"expected {CHECKPOINT_VERSION}")
    layers = []
    try:
        for entry in doc["layers"]:
            cls = _LAYER_TYPES.get(entry["kind"])
            if cls is None:
                raise FormatError(f"unknown layer kind {entry['kind']!r}")
            if not cls.param_names:
                layers.append(cls())
                continue
            kwargs = {n: _decode_array(entry["params"][n]) for n in cls.param_names}
            kwargs["activation"] = entry["activation"]
            if "stride" in entry:
                kwargs["stride"] = int(entry["stride"])
            if entry.get("unit_scale_fast_path"):
                kwargs["unit_scale_fast_path"] = True
            layers.append(cls(**kwargs))
        net = Network(layers, loss=doc["loss"], input_shape=tuple(doc["input_shape"]))
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed checkpoint: missing or invalid field {e}") from None
    except (ShapeError, ParameterError) as e:
        raise FormatError(f"malformed checkpoint: {e}") from None
    return net, doc.get("config", {})


def load_checkpoint(path) -> Network:
    return parse_checkpoint(Path(path).read_text())[0]


# ---------------------------------------------------------------------------
# metrics

def metrics_record(m) -> str:
    """One JSON line for an :class:`~efnet.training.EpochMetrics`."""
    return json.dumps(m.as_dict(), separators=(",", ":"))


def append_metrics(path, m) -> None:
    with open(path, "a") as f:
        f.write(metrics_record(m) + "\n")


def read_metrics(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]
