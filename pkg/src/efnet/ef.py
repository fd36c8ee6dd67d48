"""The ef-operator: a multiplication-free vector product.

For scalars the product is ``sign(x*y) * (|x| + |y|)``, evaluated as two sign
tests, two absolute values, one addition and a conditional negation. For
vectors it is summed over coordinates, and ``x <> x == 2 * ||x||_1``.

``sign(0) == 0`` throughout, which makes both scalar forms agree and makes a
zero weight contribute nothing.

Everything here is generic over the element type: numpy float64 arrays take
the fast path, and object arrays of rationals (``gmpy2.mpq`` or
``fractions.Fraction``) give exact results, used to check constructions
that are exact only in real arithmetic.
"""
from __future__ import annotations

import numpy as np

from . import counting
from .errors import ShapeError


def sign(x):
    """Scalar sign with ``sign(0) == 0``, returned as a float."""
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def sign_array(a: np.ndarray) -> np.ndarray:
    """Elementwise sign as float64 (also for object arrays)."""
    a = np.asarray(a)
    return (a > 0).astype(np.float64) - (a < 0).astype(np.float64)


def _zero_like(v):
    return v - v


def ef_term(x, y):
    """``sign(x*y) * (|x| + |y|)`` without a multiplication."""
    sx, sy = sign(x), sign(y)
    m = abs(x) + abs(y)
    negate = sx != sy and sx != 0 and sy != 0
    counting.record(signs=2, compares=1, abs_ops=2, adds=1, negations=int(negate))
    if sx == 0 or sy == 0:
        return _zero_like(m)
    return -m if negate else m


def ef_term_alt(x, y):
    """``sign(x)*y + sign(y)*x`` with each sign product done by negation."""
    sx, sy = sign(x), sign(y)
    t1 = y if sx > 0 else (-y if sx < 0 else _zero_like(y))
    t2 = x if sy > 0 else (-x if sy < 0 else _zero_like(x))
    counting.record(signs=2, adds=1, negations=int(sx < 0) + int(sy < 0))
    return t1 + t2


def ef_terms(x, y) -> np.ndarray:
    """Elementwise ef terms of two equally shaped arrays."""
    x, y = np.asarray(x), np.asarray(y)
    if x.shape != y.shape:
        raise ShapeError(f"ef_terms shape mismatch: {x.shape} vs {y.shape}")
    sx, sy = sign_array(x), sign_array(y)
    m = np.abs(x) + np.abs(y)
    flip = (sx != sy) & (sx != 0) & (sy != 0)
    out = np.where((sx == 0) | (sy == 0), _zero_like(m), np.where(flip, -m, m))
    n = x.size
    counting.record(signs=2 * n, compares=n, abs_ops=2 * n, adds=n,
                    negations=np.count_nonzero(flip))
    return out


def ef_dot(x, y):
    """Vector ef product ``sum_i ef_term(x[i], y[i])``."""
    x, y = np.asarray(x), np.asarray(y)
    if x.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"ef_dot expects equal-length vectors, got {x.shape} and {y.shape}")
    terms = ef_terms(x, y)
    counting.record(adds=max(x.size - 1, 0))
    if x.dtype == object:
        acc = terms[0] if terms.size else 0
        for t in terms[1:]:
            acc = acc + t
        return acc
    return float(np.sum(terms))


def ef_matmul(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Batched matrix form: row ``r`` of the result is ``X[r] <> W``.

    ``X`` has shape ``(B, d)`` and ``W`` shape ``(d, M)``. Each output is
    ``sum_i sign(x_i) w_ij + sign(w_ij) x_i``; the two sums are evaluated as
    products with {-1, 0, +1} matrices, i.e. selections and negations, so the
    result equals the per-term definition up to summation order.
    """
    X, W = np.asarray(X), np.asarray(W)
    if X.ndim != 2 or W.ndim != 2 or X.shape[1] != W.shape[0]:
        raise ShapeError(f"ef product shape mismatch: x {X.shape}, W {W.shape}")
    sX, sW = sign_array(X), sign_array(W)
    if X.dtype == object or W.dtype == object:
        out = _ef_matmul_exact(X, W, sX, sW)
    else:
        out = sX @ W + X @ sW
    if counting.counting_active():
        B, d = X.shape
        M = W.shape[1]
        pX, nX = (sX > 0).astype(np.float64), (sX < 0).astype(np.float64)
        pW, nW = (sW > 0).astype(np.float64), (sW < 0).astype(np.float64)
        flips = int(np.sum(pX @ nW) + np.sum(nX @ pW))
        c = counting.ef_dot_counts(d, B * M)
        c.negations = flips
        counting.record(**c.as_dict())
    return out


def _ef_matmul_exact(X, W, sX, sW):
    # Object (rational) path. Terms with a zero weight vanish, so each column
    # only touches its nonzero rows; integer signs keep the arithmetic exact.
    X = X.astype(object)
    iX = sX.astype(np.int64).astype(object)
    out = np.empty((X.shape[0], W.shape[1]), dtype=object)
    for j in range(W.shape[1]):
        nz = np.flatnonzero(sW[:, j])
        if nz.size == 0:
            out[:, j] = 0
            continue
        w = W[nz, j].astype(object)
        sw = sW[nz, j].astype(np.int64).astype(object)
        out[:, j] = iX[:, nz] @ w + X[:, nz] @ sw
    return out


def ef_matprod(x, W) -> np.ndarray:
    """``x <> W``: the ef product of ``x`` with every column of ``W``."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ShapeError(f"ef_matprod expects a vector, got shape {x.shape}")
    return ef_matmul(x[None, :], W)[0]
