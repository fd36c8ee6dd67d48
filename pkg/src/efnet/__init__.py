"""Multiplication-free additive neural networks built on the ef-operator."""
from .counting import OpCounter, count_ops, scoped_count, theoretical_counts
from .ef import ef_dot, ef_matmul, ef_matprod, ef_term, ef_term_alt, sign
from .errors import (DivergenceError, EfnetError, FormatError, ParameterError, ShapeError,
                     VersionError)
from .layers import (Activation, AdditiveConv, AdditiveDense, ClassicConv, ClassicDense,
                     Flatten, GradMode, MaxPool2)
from .network import Loss, Network

__version__ = "0.1.0"
