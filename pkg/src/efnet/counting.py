"""Operation accounting.

Kernels report how many operations of each class they perform by calling
:func:`record`. Tallies go to every counter opened with :func:`count_ops` on
the current thread, so nested scopes compose additively. Outside any scope
``record`` is a no-op.

Counting is by semantic operation at the library-call level. One ef term
``sign(x*y) * (|x| + |y|)`` is tallied as 2 sign evaluations, 1 comparison
of the two signs, 2 absolute values, 1 addition and, when the signs
disagree, 1 negation. Summing ``n`` terms costs ``n - 1`` additions and a
bias costs one more. Activations, softmax and losses are not counted.
"""
from __future__ import annotations

import dataclasses
import threading
from contextlib import contextmanager
from dataclasses import dataclass

from .errors import ParameterError

FIELDS = ("mults", "adds", "signs", "compares", "abs_ops", "negations")
# negations depend on operand signs; every other class depends only on shapes
SHAPE_DETERMINED = ("mults", "adds", "signs", "compares", "abs_ops")


@dataclass
class OpCounter:
    mults: int = 0
    adds: int = 0
    signs: int = 0
    compares: int = 0
    abs_ops: int = 0
    negations: int = 0

    def add(self, other: "OpCounter") -> None:
        for f in FIELDS:
            setattr(self, f, getattr(self, f) + getattr(other, f))

    def reset(self) -> None:
        for f in FIELDS:
            setattr(self, f, 0)

    def copy(self) -> "OpCounter":
        return dataclasses.replace(self)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def __add__(self, other):
        out = self.copy()
        out.add(other)
        return out

    def __mul__(self, k: int):
        return OpCounter(**{f: getattr(self, f) * k for f in FIELDS})

    __rmul__ = __mul__

    def matches(self, predicted: "OpCounter") -> bool:
        """True if this measured tally agrees with a closed-form prediction.

        Shape-determined classes must be equal; ``predicted.negations`` is an
        upper bound because a negation is only issued on a sign mismatch.
        """
        return (all(getattr(self, f) == getattr(predicted, f) for f in SHAPE_DETERMINED)
                and self.negations <= predicted.negations)


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def record(mults=0, adds=0, signs=0, compares=0, abs_ops=0, negations=0) -> None:
    for c in _stack():
        c.mults += int(mults)
        c.adds += int(adds)
        c.signs += int(signs)
        c.compares += int(compares)
        c.abs_ops += int(abs_ops)
        c.negations += int(negations)


def counting_active() -> bool:
    return bool(_stack())


@contextmanager
def count_ops(counter: OpCounter | None = None):
    """Tally operations performed inside the ``with`` block.

    >>> with count_ops() as ops:
    ...     pass
    >>> ops.mults
    0
    """
    counter = OpCounter() if counter is None else counter
    stack = _stack()
    stack.append(counter)
    try:
        yield counter
    finally:
        stack.remove(counter)


def scoped_count(fn, *args, **kwargs) -> tuple[OpCounter, object]:
    """Run ``fn(*args, **kwargs)`` and return ``(tally, result)``."""
    with count_ops() as ops:
        result = fn(*args, **kwargs)
    return ops, result


# ---------------------------------------------------------------------------
# closed forms

def ef_terms_counts(n_terms: int, negations: int | None = None) -> OpCounter:
    """Counts for evaluating ``n_terms`` scalar ef terms (no accumulation)."""
    return OpCounter(adds=n_terms, signs=2 * n_terms, compares=n_terms,
                     abs_ops=2 * n_terms,
                     negations=n_terms if negations is None else negations)


def ef_dot_counts(d: int, n_dots: int = 1) -> OpCounter:
    c = ef_terms_counts(d * n_dots)
    c.adds += max(d - 1, 0) * n_dots
    return c


def theoretical_counts(kind: str, *, d: int = 0, M: int = 0, positions: int = 1,
                       batch: int = 1, unit_scale: bool = False) -> OpCounter:
    """Predicted forward-pass tally for one layer.

    ``kind`` is one of ``additive_dense``, ``classic_dense``,
    ``additive_conv``, ``classic_conv``, ``maxpool2``. For dense layers ``d``
    is the input width and ``M`` the number of neurons; for convolutions
    ``d`` is the receptive-field size (channels x kh x kw), ``M`` the number
    of filters and ``positions`` the number of output pixels; for max-pooling
    ``M`` is the channel count and ``positions`` the number of output pixels.
    ``unit_scale`` predicts the scaling-free path of an additive layer whose
    scale vector is all ones.
    """
    n_out = M * positions * batch
    if kind in ("additive_dense", "additive_conv"):
        c = ef_dot_counts(d, n_out)
        c.mults = 0 if unit_scale else n_out
        c.adds += n_out  # bias
        return c
    if kind in ("classic_dense", "classic_conv"):
        return OpCounter(mults=d * n_out, adds=d * n_out)
    if kind == "maxpool2":
        return OpCounter(compares=3 * n_out)
    raise ParameterError(f"unknown layer kind {kind!r}")
