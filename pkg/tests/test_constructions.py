from fractions import Fraction

import numpy as np
import pytest

from efnet.constructions import (SignNetSpec, SuperpositionSpec, build_sign_network,
                                 build_superposition, convert_to_relu_network, input_negation_layer,
                                 negate_layer, random_identity_network, relu_split_identity,
                                 verify_relu_conversion, verify_sign_network, verify_superposition)
from efnet.ef import sign
from efnet.errors import ParameterError
from efnet.layers import Activation, AdditiveDense, ClassicDense
from efnet.network import exact_array, to_exact
from efnet.tensor import make_rng


def exact_out(net, x):
    return to_exact(net).predict(exact_array(np.atleast_2d(x)))


class TestSignNetwork:
    def test_first_layer_block(self):
        y = np.array([1.5, -0.5])
        net = build_sign_network(SignNetSpec(y, 0.3))
        x = np.array([-0.25, 2.0])
        h, _ = net.layers[0].forward(x)
        s1, s2 = sign(x[0]), sign(x[1])
        expected = [y[0] * (x[0] + s1), y[0] * (x[0] + s1), y[0] * (x[0] + 2 * s1),
                    y[1] * (x[1] + s2), y[1] * (x[1] + s2), y[1] * (x[1] + 2 * s2)]
        assert np.allclose(h, expected, atol=1e-15, rtol=0)

    def test_layer_two_recovers_affine(self):
        rng = make_rng(1)
        y, b, x = rng.normal(size=4), 0.7, rng.normal(size=4)
        net = build_sign_network(SignNetSpec(y, b))
        h = exact_array(x)[None]
        for layer in to_exact(net).layers[:2]:
            h, _ = layer.forward(h)
        z = sum(Fraction(v) * Fraction(u) for v, u in zip(y, x)) + Fraction(b)
        assert h[0, 0] == z

    def test_examples(self):
        assert exact_out(build_sign_network(SignNetSpec([1, 1], -0.5)), [1, 0])[0, 0] == 1
        assert exact_out(build_sign_network(SignNetSpec([2, -1], 0.0)), [0, 0])[0, 0] == 0

    def test_structure(self):
        net = build_sign_network(SignNetSpec([1, 2, 3], 0.0))
        assert [l.W.shape for l in net.layers] == [(3, 9), (9, 1), (1, 2), (2, 1)]
        assert all(isinstance(l, AdditiveDense) and l.activation is Activation.IDENTITY
                   for l in net.layers)

    def test_float_sign_is_right(self):
        rng = make_rng(2)
        for _ in range(200):
            y, b, x = rng.normal(size=3), float(rng.normal()), rng.normal(size=3)
            out = build_sign_network(SignNetSpec(y, b)).predict(x)[0, 0]
            assert np.sign(out) == np.sign(y @ x + b) and abs(out - np.sign(y @ x + b)) < 1e-12

    def test_invalid_spec(self):
        with pytest.raises(ParameterError):
            SignNetSpec([], 0.0)
        with pytest.raises(ParameterError):
            SignNetSpec([1.0], float("inf"))

    def test_suite_small(self):
        r = verify_sign_network(dims=(1, 4), cases=60, seed=3)
        assert r["passed"] and r["checked"] == 120 and r["boundary_checked"] == 12


class TestLayerRewrites:
    def layer(self, seed=0, d=4, M=3):
        rng = make_rng(seed)
        return AdditiveDense(rng.normal(size=(d, M)), rng.normal(size=M), rng.normal(size=M))

    def test_negate(self):
        layer = self.layer()
        X = make_rng(5).normal(size=(20, 4))
        neg = negate_layer(layer)
        assert np.allclose(neg.forward(X)[0], -layer.forward(X)[0], atol=1e-12, rtol=0)
        back = negate_layer(neg)
        assert all(np.array_equal(getattr(back, n), getattr(layer, n)) for n in ("W", "a", "b"))

    def test_negate_zero_layer(self):
        z = AdditiveDense(np.zeros((2, 2)), np.zeros(2), np.zeros(2))
        assert np.all(negate_layer(z).forward(np.ones(2))[0] == 0)

    def test_input_negation(self):
        layer = self.layer(1)
        X = make_rng(6).normal(size=(20, 4))
        flipped = input_negation_layer(layer)
        assert np.allclose(flipped.forward(-X)[0], layer.forward(X)[0], atol=1e-12, rtol=0)
        assert np.array_equal(flipped.forward(np.zeros(4))[0], layer.forward(np.zeros(4))[0])
        twice = input_negation_layer(flipped)
        assert all(np.array_equal(getattr(twice, n), getattr(layer, n)) for n in ("W", "a", "b"))

    @pytest.mark.parametrize("signs", ["pos", "neg", "mixed"])
    def test_relu_split(self, signs):
        layer = self.layer(2)
        x = np.abs(make_rng(7).normal(size=(30, 4)))
        if signs == "neg":
            x = -x
        elif signs == "mixed":
            x = x * make_rng(8).choice([-1.0, 1.0], size=x.shape)
        split, direct = relu_split_identity(layer, x)
        assert np.allclose(split, direct, atol=1e-12, rtol=0)

    def test_relu_split_needs_identity(self):
        layer = self.layer()
        layer.activation = Activation.RELU
        with pytest.raises(ParameterError):
            relu_split_identity(layer, np.ones(4))


class TestReluConversion:
    def test_single_layer(self):
        rng = make_rng(3)
        net = random_identity_network(rng, d=3, depth=1)
        X = rng.normal(size=(100, 3))
        assert np.allclose(convert_to_relu_network(net).predict(X), net.predict(X), atol=1e-9, rtol=0)

    def test_widths_double(self):
        net = random_identity_network(make_rng(4), depth=3)
        conv = convert_to_relu_network(net)
        for o, c in zip(net.layers, conv.layers):
            assert c.W.shape[1] == 2 * o.W.shape[1] and c.activation is Activation.RELU
        assert isinstance(conv.layers[-1], ClassicDense)

    def test_converted_sign_network(self):
        rng = make_rng(5)
        for _ in range(50):
            y, b, x = rng.normal(size=2), float(rng.normal()), rng.normal(size=2)
            net = convert_to_relu_network(build_sign_network(SignNetSpec(y, b)))
            z = sum(Fraction(v) * Fraction(u) for v, u in zip(y, x)) + Fraction(b)
            assert exact_out(net, x)[0, 0] == (z > 0) - (z < 0)

    def test_rejects_non_identity(self):
        net = random_identity_network(make_rng(6), depth=2)
        net.layers[0].activation = Activation.TANH
        with pytest.raises(ParameterError):
            convert_to_relu_network(net)

    def test_suite(self):
        r = verify_relu_conversion(nets=20, inputs=20, seed=1)
        assert r["passed"] and r["max_dev"] <= 1e-9 and r["obs_max_dev"] <= 1e-12


class TestSuperposition:
    def test_single_term_is_sign_network(self):
        spec = SuperpositionSpec([(1.0, [0.5, -1.0], 0.25)])
        X = make_rng(1).normal(size=(50, 2))
        sup = exact_out(build_superposition(spec), X)[:, 0]
        one = exact_out(build_sign_network(SignNetSpec([0.5, -1.0], 0.25)), X)[:, 0]
        assert list(sup) == list(one)

    def test_random_spec(self):
        rng = make_rng(2)
        spec = SuperpositionSpec([(float(rng.normal()), rng.normal(size=3), float(rng.normal()))
                                  for _ in range(3)])
        X = exact_array(rng.uniform(-1, 1, (500, 3)))
        for relu in (False, True):
            got = to_exact(build_superposition(spec, relu)).predict(X)[:, 0]
            assert list(got) == list(spec.evaluate(X))

    def test_step_function(self):
        # 1_{x > 0} ~ 0.5 + 0.5 sign(x); the constant comes from a term that is always +1
        spec = SuperpositionSpec([(0.5, [1.0], 0.0), (0.5, [0.0], 1.0)])
        grid = np.linspace(-1, 1, 41)
        grid = grid[grid != 0]
        out = build_superposition(spec).predict(grid[:, None])[:, 0]
        assert np.array_equal(out, (grid > 0).astype(float))
        assert np.array_equal(out, spec.evaluate(grid[:, None]))

    def test_only_output_layer_multiplies_by_alpha(self):
        spec = SuperpositionSpec([(3.0, [1.0, 2.0], 0.1), (-2.0, [0.5, 0.5], 0.0)])
        net = build_superposition(spec)
        assert all(isinstance(l, AdditiveDense) for l in net.layers[:-1])
        assert isinstance(net.layers[-1], ClassicDense)
        assert net.layers[-1].W[:, 0].tolist() == [3.0, -2.0]

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            SuperpositionSpec([(1.0, [1.0], 0.0), (1.0, [1.0, 2.0], 0.0)])
        with pytest.raises(ParameterError):
            SuperpositionSpec([])

    def test_suite_small(self):
        r = verify_superposition(max_terms=3, inputs=50, seed=2)
        assert r["passed"] and r["checked"] > 0
