import numpy as np
import pytest

from efnet.counting import OpCounter, count_ops, record, scoped_count, theoretical_counts
from efnet.ef import ef_dot
from efnet.errors import ParameterError
from efnet.layers import (AdditiveConv, AdditiveDense, ClassicConv, ClassicDense,
                          additive_conv_forward, additive_dense_forward, classic_dense_forward,
                          maxpool2_forward)
from efnet.tensor import make_rng
from efnet.training import build_mnist_mlp


class TestOpCounter:
    def test_reset(self):
        c = OpCounter(1, 2, 3, 4, 5, 6)
        c.reset()
        assert c == OpCounter()

    def test_nested_scopes_add(self):
        with count_ops() as outer:
            record(mults=2)
            with count_ops() as inner:
                record(mults=3, adds=1)
        assert inner.mults == 3 and outer.mults == 5 and outer.adds == 1

    def test_outside_scope_is_noop(self):
        record(mults=10)
        with count_ops() as c:
            pass
        assert c.mults == 0

    def test_arithmetic(self):
        c = OpCounter(mults=1, adds=2) + OpCounter(mults=3)
        assert c.mults == 4 and (2 * c).adds == 4

    def test_scoped_count(self):
        ops, out = scoped_count(ef_dot, np.ones(10), np.ones(10))
        assert out == 20 and ops.mults == 0


class TestTheory:
    def test_small_cases(self):
        assert theoretical_counts("additive_dense", d=2, M=1).mults == 1
        assert theoretical_counts("classic_dense", d=2, M=1).mults == 2

    def test_additive_closed_form(self):
        c = theoretical_counts("additive_dense", d=784, M=300)
        assert c.mults == 300
        assert c.adds == 2 * 784 * 300
        assert c.signs == 2 * 784 * 300

    def test_unit_scale(self):
        assert theoretical_counts("additive_dense", d=4, M=3, unit_scale=True).mults == 0

    def test_unknown_kind(self):
        with pytest.raises(ParameterError):
            theoretical_counts("lstm", d=1, M=1)


def _measure_dense(kind, d, M, B, rng):
    cls, fwd = {"additive_dense": (AdditiveDense, additive_dense_forward),
                "classic_dense": (ClassicDense, classic_dense_forward)}[kind]
    layer = cls.init(d, M, "relu", rng)
    x = rng.uniform(-1, 1, (B, d)) if B > 1 else rng.uniform(-1, 1, d)
    with count_ops() as ops:
        fwd(layer, x)
    return ops


class TestMeasuredEqualsTheory:
    def test_paper_sizes(self):
        rng = make_rng(0)
        assert _measure_dense("additive_dense", 784, 300, 1, rng).mults == 300
        assert _measure_dense("classic_dense", 784, 300, 1, rng).mults == 235200

    def test_random_shapes(self):
        rng = make_rng(100)
        for _ in range(50):
            d, M = (int(v) for v in rng.integers(1, 60, size=2))
            B = int(rng.integers(1, 5))
            for kind in ("additive_dense", "classic_dense"):
                ops = _measure_dense(kind, d, M, B, rng)
                assert ops.matches(theoretical_counts(kind, d=d, M=M, batch=B)), (kind, d, M, B)

    def test_conv_and_pool(self):
        rng = make_rng(1)
        for _ in range(10):
            C, K, k = (int(v) for v in rng.integers(1, 4, size=3))
            H = int(rng.integers(k, k + 6))
            img = rng.uniform(-1, 1, (C, H, H))
            pos = (H - k + 1) ** 2
            layer = AdditiveConv.init(K, C, k, "relu", rng)
            with count_ops() as ops:
                additive_conv_forward(layer, img)
            assert ops.matches(theoretical_counts("additive_conv", d=C * k * k, M=K, positions=pos))
            assert ops.mults == K * pos
            layer = ClassicConv.init(K, C, k, "relu", rng)
            with count_ops() as ops:
                layer.forward(img)
            assert ops.matches(theoretical_counts("classic_conv", d=C * k * k, M=K, positions=pos))
        with count_ops() as ops:
            maxpool2_forward(rng.normal(size=(3, 6, 8)))
        assert ops.matches(theoretical_counts("maxpool2", M=3, positions=12))

    def test_unit_scale_fast_path(self):
        rng = make_rng(2)
        layer = AdditiveDense.init(5, 4, "relu", rng, unit_scale_fast_path=True)
        x = rng.normal(size=5)
        with count_ops() as ops:
            y_fast, _ = additive_dense_forward(layer, x)
        assert ops.mults == 0
        slow = AdditiveDense(layer.W, layer.a, layer.b, layer.activation)
        assert np.array_equal(y_fast, additive_dense_forward(slow, x)[0])

    def test_mlp_forward_total(self):
        net = build_mnist_mlp("ef", 2, seed=0)
        with count_ops() as ops:
            net.predict(make_rng(0).random(784))
        assert ops.mults == 300 + 100 + 100 * 10

    def test_counting_does_not_change_results(self):
        rng = make_rng(3)
        layer = AdditiveDense.init(20, 7, "tanh", rng)
        x = rng.normal(size=(4, 20))
        plain = additive_dense_forward(layer, x)[0]
        with count_ops():
            counted = additive_dense_forward(layer, x)[0]
        assert np.array_equal(plain, counted)
