from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efnet import count_ops
from efnet.ef import ef_dot, ef_matmul, ef_matprod, ef_term, ef_term_alt, ef_terms, sign
from efnet.errors import ShapeError
from efnet.network import exact_array
from efnet.tensor import make_rng

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
with_zeros = st.one_of(finite, st.just(0.0), st.just(-0.0))


class TestSign:
    @pytest.mark.parametrize("x,expected", [(2.5, 1.0), (-1e-300, -1.0), (0.0, 0.0), (-0.0, 0.0)])
    def test_values(self, x, expected):
        assert sign(x) == expected


class TestEfTerm:
    @pytest.mark.parametrize("x,y,expected", [(3, -2, -5), (0, 7, 0), (-1.5, -0.5, 2.0)])
    def test_examples(self, x, y, expected):
        assert ef_term(x, y) == expected

    @pytest.mark.parametrize("x,y,expected", [(3, -2, -5), (0, 7, 0), (2, 2, 4)])
    def test_alt_examples(self, x, y, expected):
        assert ef_term_alt(x, y) == expected

    @given(with_zeros, with_zeros)
    def test_forms_agree(self, x, y):
        assert ef_term(x, y) == ef_term_alt(x, y)

    @given(with_zeros, with_zeros)
    def test_symmetric(self, x, y):
        assert ef_term(x, y) == ef_term(y, x)

    def test_no_multiplications(self):
        with count_ops() as ops:
            ef_term(3.0, -2.0)
            ef_term_alt(3.0, -2.0)
        assert ops.mults == 0
        assert ops.negations == 1 + 1


class TestEfDot:
    @pytest.mark.parametrize("x,y,expected", [
        ([1, 2], [3, -4], -2),
        ([2, -3], [2, -3], 10),
        ([0, 0], [5, -5], 0),
    ])
    def test_examples(self, x, y, expected):
        assert ef_dot(np.array(x, float), np.array(y, float)) == expected

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ef_dot(np.ones(2), np.ones(3))

    @settings(max_examples=200)
    @given(st.lists(with_zeros, min_size=1, max_size=64))
    def test_l1_identity(self, xs):
        x = np.array(xs)
        assert ef_dot(x, x) == 2 * np.sum(np.abs(x))

    @settings(max_examples=200)
    @given(st.integers(1, 64).flatmap(
        lambda d: st.tuples(st.lists(with_zeros, min_size=d, max_size=d),
                            st.lists(with_zeros, min_size=d, max_size=d))))
    def test_symmetry_and_negation(self, pair):
        x, y = (np.array(v) for v in pair)
        assert ef_dot(x, y) == ef_dot(y, x)
        assert ef_dot(-x, y) == -ef_dot(x, y)

    def test_not_linear_in_scale(self):
        x, y = np.array([1.0, -2.0]), np.array([3.0, 1.0])
        assert ef_dot(2 * x, y) != 2 * ef_dot(x, y)

    def test_exact_rationals(self):
        x = exact_array([0.1, -0.2, 0.0])
        y = exact_array([0.3, 0.3, 5.0])
        expected = Fraction(0.1) + Fraction(0.3) - Fraction(0.2) - Fraction(0.3)
        assert ef_dot(x, y) == expected

    def test_zero_mults(self):
        rng = make_rng(4)
        with count_ops() as ops:
            ef_dot(rng.normal(size=10), rng.normal(size=10))
        assert ops.mults == 0
        assert ops.adds == 10 + 9


class TestEfMatprod:
    def test_example(self):
        out = ef_matprod(np.array([1.0, 2.0]), np.array([[3.0, 0.0], [-4.0, 1.0]]))
        assert out.tolist() == [-2, 3]

    def test_zero_weights(self):
        x = make_rng(0).normal(size=5)
        assert np.all(ef_matprod(x, np.zeros((5, 3))) == 0)

    @pytest.mark.parametrize("x1", [-1.75, 0.0, 0.5, 3.0])
    def test_first_sign_block(self, x1):
        out = ef_matprod(np.array([x1]), np.array([[1.0, 1.0, 2.0]]))
        s = sign(x1)
        assert out.tolist() == [x1 + s, x1 + s, x1 + 2 * s]

    def test_matches_per_column_dot(self):
        rng = make_rng(2)
        for _ in range(20):
            d, M = rng.integers(1, 12, size=2)
            x = rng.normal(size=d)
            x[rng.random(d) < 0.2] = 0.0
            W = rng.normal(size=(d, M))
            W[rng.random((d, M)) < 0.2] = 0.0
            out = ef_matprod(x, W)
            ref = [ef_dot(x, W[:, j].copy()) for j in range(M)]
            assert np.allclose(out, ref, atol=1e-12, rtol=0)

    def test_batch_rows(self):
        rng = make_rng(3)
        X, W = rng.normal(size=(6, 4)), rng.normal(size=(4, 5))
        out = ef_matmul(X, W)
        for r in range(6):
            assert np.allclose(out[r], ef_matprod(X[r], W), atol=1e-12, rtol=0)

    def test_exact_path_matches_terms(self):
        rng = make_rng(5)
        X = rng.normal(size=(3, 4))
        W = rng.normal(size=(4, 2))
        W[1, 0] = 0.0
        exact = ef_matmul(exact_array(X), exact_array(W))
        for r in range(3):
            for j in range(2):
                assert exact[r, j] == sum(ef_terms(exact_array(X[r]), exact_array(W[:, j])))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ef_matprod(np.ones(3), np.ones((2, 2)))

    def test_counts_negations(self):
        x = np.array([1.0, -1.0, 0.0])
        W = np.array([[1.0, -1.0], [1.0, 1.0], [5.0, 5.0]])
        with count_ops() as ops:
            ef_matprod(x, W)
        # mismatched pairs: (-1, 1) in column 0; (1, -1) and (-1, 1) in column 1
        assert ops.negations == 3
        assert ops.mults == 0


class TestSignPropagation:
    @given(st.floats(-1e3, 1e3), st.one_of(st.just(0.0), st.floats(-1e3, 1e3)),
           st.floats(1e-3, 1e3))
    def test_scaled_shift_keeps_sign(self, a, u, b):
        # sign(a (u + b sign(u))) == sign(a u) for b > 0, checked exactly
        a, u, b = Fraction(a), Fraction(u), Fraction(b)
        assert sign(a * (u + b * sign(u))) == sign(a * u)
