#!/usr/bin/env python3
"""Rebuild the standard MNIST IDX files when the canonical mirrors are unreachable.

The ``mnist-hub`` wheel on PyPI ships the classic ``mnist.pkl.gz`` pickle
(50k train / 10k valid / 10k test, pixels stored as ``byte / 256``). Train and
valid concatenated are the 60k IDX training set in order; pixel bytes are
recovered exactly by multiplying by 256.

    python scripts/fetch_mnist.py data/mnist
"""
import argparse
import glob
import gzip
import io
import pickle
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np


def write_idx_images(path, images):
    n = images.shape[0]
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def to_bytes(x):
    b = np.asarray(x, dtype=np.float64) * 256.0
    if not np.array_equal(b, np.round(b)) or b.max() > 255:
        raise SystemExit("unexpected pixel encoding in pickle")
    return b.astype(np.uint8)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--wheel", help="use an already-downloaded mnist-hub wheel")
    args = ap.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                            "mnist-hub==0.1.4", "-d", tmp, "-q"], check=True)
            wheel = glob.glob(f"{tmp}/mnist_hub-*.whl")[0]
        raw = zipfile.ZipFile(wheel).read("mnist/data/mnist.pkl.gz")
    train, valid, test = pickle.load(gzip.open(io.BytesIO(raw)), encoding="latin1")

    args.out.mkdir(parents=True, exist_ok=True)
    train_x = np.concatenate([to_bytes(train[0]), to_bytes(valid[0])])
    train_y = np.concatenate([train[1], valid[1]])
    write_idx_images(args.out / "train-images-idx3-ubyte.gz", train_x)
    write_idx_labels(args.out / "train-labels-idx1-ubyte.gz", train_y)
    write_idx_images(args.out / "t10k-images-idx3-ubyte.gz", to_bytes(test[0]))
    write_idx_labels(args.out / "t10k-labels-idx1-ubyte.gz", test[1])
    print(f"wrote {len(train_y)} train / {len(test[1])} test samples to {args.out}")


if __name__ == "__main__":
    main()
