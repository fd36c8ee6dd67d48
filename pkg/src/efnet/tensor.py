"""Dense float64 containers and the seeded generator used across the package.

Vectors and matrices are plain ``numpy.ndarray`` objects (float64, C order,
so row-major). The helpers here validate shapes and keep every random draw
behind one generator family: numpy's PCG64 (128-bit LCG state with an
XSL-RR output permutation), whose stream for a given seed is fixed across
platforms and numpy versions.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

DTYPE = np.float64


def make_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Return the package's deterministic generator for ``seed``.

    Distinct ``stream`` values give independent generators for one seed
    (e.g. parameter initialisation vs. minibatch shuffling).
    """
    if not 0 <= seed < 2**64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    if stream is None:
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def vector(values) -> np.ndarray:
    v = np.array(values, dtype=DTYPE)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-d vector, got shape {v.shape}")
    return v


def matrix(rows) -> np.ndarray:
    m = np.array(rows, dtype=DTYPE)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def zeros(rows: int, cols: int) -> np.ndarray:
    if rows < 0 or cols < 0:
        raise ParameterError(f"negative shape ({rows}, {cols})")
    return np.zeros((rows, cols), dtype=DTYPE)


def uniform_init(rows: int, cols: int, lo: float, hi: float,
                 rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform draws on ``[lo, hi)``."""
    if not lo < hi:
        raise ParameterError(f"invalid range [{lo}, {hi})")
    return rng.uniform(lo, hi, size=(rows, cols)).astype(DTYPE, copy=False)


def glorot_range(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def column(W: np.ndarray, j: int) -> np.ndarray:
    """Copy of column ``j``; the ef products consume weight columns."""
    if not 0 <= j < W.shape[1]:
        raise ShapeError(f"column {j} out of range for {W.shape[1]} columns")
    return W[:, j].copy()


def matvec(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Classical product ``out[j] = sum_i x[i] * W[i, j]``."""
    if W.ndim != 2 or x.ndim != 1 or W.shape[0] != x.shape[0]:
        raise ShapeError(f"matvec shape mismatch: W {W.shape}, x {x.shape}")
    return x @ W
