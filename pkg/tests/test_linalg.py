"""Core linear-algebra layer: Matrix semantics, SVD, norms, seeded RNG."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muonlab.errors import DegenerateInputError, NumericError, RangeError, ShapeError
from muonlab.linalg import (
    F32,
    F64,
    Matrix,
    Rng,
    dtype_of,
    frobenius_norm,
    matmul,
    spectral_norm_estimate,
    svd,
    trace,
)


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop reference product, deliberately independent of BLAS."""
    rows, inner = a.shape
    inner2, cols = b.shape
    assert inner == inner2
    out = np.zeros((rows, cols), dtype=np.float64)
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(7).normal((3, 4))
        b = Rng(7).normal((3, 4))
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = Rng(7).normal((3, 4))
        b = Rng(8).normal((3, 4))
        assert not np.array_equal(a, b)

    def test_children_are_stable_and_distinct(self):
        root = Rng(42)
        c1 = root.child("data")
        c2 = root.child("data")
        c3 = root.child("init")
        assert c1.seed == c2.seed
        assert c1.seed != c3.seed
        np.testing.assert_array_equal(c1.normal((2, 2)), c2.normal((2, 2)))

    def test_child_accepts_int_and_str_tags(self):
        root = Rng(0)
        assert root.child(3).seed == root.child(3).seed
        assert root.child(3).seed != root.child("3x").seed

    def test_draw_order_does_not_leak_between_children(self):
        root = Rng(9)
        before = root.child("a").normal((4,))
        root.child("b").normal((100,))
        after = Rng(9).child("a").normal((4,))
        np.testing.assert_array_equal(before, after)

    def test_integers_bounds(self):
        draws = Rng(5).integers(3, 9, size=1000)
        assert draws.min() >= 3
        assert draws.max() < 9

    def test_permutation_is_permutation(self):
        perm = Rng(6).permutation(50)
        assert sorted(perm.tolist()) == list(range(50))

    def test_uniform_range(self):
        u = Rng(11).uniform(size=1000)
        assert u.min() >= 0.0 and u.max() < 1.0

    def test_normal_scale(self):
        draws = Rng(1).normal((20000,), scale=3.0)
        assert abs(float(np.std(draws)) - 3.0) < 0.1

    def test_unit_vector_has_unit_norm(self):
        v = Rng(2).unit_vector(17)
        assert abs(float(np.linalg.norm(v)) - 1.0) < 1e-12


class TestMatrix:
    def test_requires_2d(self):
        with pytest.raises(ShapeError):
            Matrix(np.zeros(3))
        with pytest.raises(ShapeError):
            Matrix(np.zeros((2, 2, 2)))

    def test_rejects_non_finite(self):
        bad = np.ones((2, 2))
        bad[0, 1] = np.nan
        with pytest.raises(NumericError):
            Matrix(bad)
        bad[0, 1] = np.inf
        with pytest.raises(NumericError):
            Matrix(bad)

    def test_array_is_isolated_from_caller(self):
        src = np.ones((2, 2))
        m = Matrix(src)
        src[0, 0] = 5.0
        assert m.a[0, 0] == 1.0

    def test_shape_accessors(self):
        m = Matrix(np.zeros((3, 5)))
        assert (m.rows, m.cols) == (3, 5)
        assert m.shape == (3, 5)
        assert m.dtype == F64

    def test_operators_match_numpy(self, make_matrix):
        x = make_matrix(3, 3, seed=1)
        y = make_matrix(3, 3, seed=2)
        np.testing.assert_allclose((x + y).a, x.a + y.a)
        np.testing.assert_allclose((x - y).a, x.a - y.a)
        np.testing.assert_allclose((x * 2.5).a, x.a * 2.5)
        np.testing.assert_allclose((x @ y).a, x.a @ y.a)

    def test_shape_mismatch_raises(self, make_matrix):
        with pytest.raises(ShapeError):
            make_matrix(2, 3) + make_matrix(3, 2)
        with pytest.raises(ShapeError):
            make_matrix(2, 3) @ make_matrix(2, 3)

    def test_transpose(self, make_matrix):
        m = make_matrix(2, 5)
        np.testing.assert_array_equal(m.transpose().a, m.a.T)

    def test_astype_roundtrip(self, make_matrix):
        m = make_matrix(4, 4)
        m32 = m.astype(F32)
        assert m32.dtype == F32
        np.testing.assert_allclose(m32.a, m.a.astype(F32))

    def test_constructors(self):
        np.testing.assert_array_equal(Matrix.zeros(2, 3).a, np.zeros((2, 3)))
        np.testing.assert_array_equal(Matrix.identity(3).a, np.eye(3))
        np.testing.assert_array_equal(Matrix.diag([1.0, 2.0]).a, np.diag([1.0, 2.0]))

    def test_dtype_of(self):
        assert dtype_of("f64") == F64
        assert dtype_of("f32") == F32
        with pytest.raises(RangeError):
            dtype_of("f16")


class TestMatmulOracle:
    def test_matches_triple_loop(self, make_matrix):
        a = make_matrix(5, 7, seed=3)
        b = make_matrix(7, 4, seed=4)
        got = matmul(a, b).a
        np.testing.assert_allclose(got, naive_matmul(a.a, b.a), rtol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6),
           st.integers(0, 10_000))
    def test_associativity(self, m, k, n, seed):
        root = Rng(seed)
        a = Matrix(root.child("a").normal((m, k)))
        b = Matrix(root.child("b").normal((k, n)))
        c = Matrix(root.child("c").normal((n, 3)))
        left = (a @ b) @ c
        right = a @ (b @ c)
        np.testing.assert_allclose(left.a, right.a, rtol=1e-10, atol=1e-12)


class TestNorms:
    def test_frobenius_matches_numpy(self, make_matrix):
        m = make_matrix(6, 9)
        assert abs(frobenius_norm(m) - np.linalg.norm(m.a)) < 1e-12

    def test_trace(self):
        m = Matrix(np.arange(9, dtype=float).reshape(3, 3))
        assert trace(m) == 0.0 + 4.0 + 8.0

    def test_trace_needs_square(self, make_matrix):
        with pytest.raises(ShapeError):
            trace(make_matrix(2, 3))


class TestSvd:
    @pytest.mark.parametrize("rows,cols", [(6, 6), (9, 4), (4, 9), (1, 5), (5, 1)])
    def test_factorization_invariants(self, rows, cols, make_matrix):
        m = make_matrix(rows, cols, seed=rows * 100 + cols)
        res = svd(m)
        r = min(rows, cols)
        s = np.asarray(res.singular_values)
        assert res.u.shape == (rows, r)
        assert res.v.shape == (cols, r)
        assert np.all(s[:-1] >= s[1:]) if r > 1 else True
        assert np.all(s >= 0.0)
        np.testing.assert_allclose(res.u.a.T @ res.u.a, np.eye(r), atol=1e-12)
        np.testing.assert_allclose(res.v.a.T @ res.v.a, np.eye(r), atol=1e-12)
        recon = (res.u.a * s) @ res.v.a.T
        np.testing.assert_allclose(recon, m.a, atol=1e-10)

    def test_rank_detection(self):
        base = Rng(0).normal((8, 3))
        lift = Rng(1).normal((3, 8))
        res = svd(Matrix(base @ lift))
        assert res.rank == 3

    def test_rank_tol_truncating_everything_raises(self, make_matrix):
        with pytest.raises(DegenerateInputError):
            svd(make_matrix(5, 5), rank_tol=1e12)

    def test_diagonal_known_values(self):
        res = svd(Matrix.diag([3.0, -7.0, 0.5]))
        np.testing.assert_allclose(res.singular_values, [7.0, 3.0, 0.5], rtol=1e-14)


class TestSpectralNormEstimate:
    def test_matches_svd_oracle(self, make_matrix):
        for seed in range(5):
            m = make_matrix(12, 7, seed=seed)
            est = spectral_norm_estimate(m, iters=200, rng=Rng(seed))
            smax = float(svd(m).singular_values[0])
            assert abs(est - smax) / smax < 1e-6

    def test_never_exceeds_frobenius(self, make_matrix):
        for seed in range(20):
            m = make_matrix(5, 5, seed=seed)
            assert spectral_norm_estimate(m, rng=Rng(seed)) <= frobenius_norm(m) + 1e-15

    def test_rank_one_equals_frobenius(self):
        u = Rng(3).normal((6, 1))
        v = Rng(4).normal((1, 4))
        m = Matrix(u @ v)
        est = spectral_norm_estimate(m, rng=Rng(5))
        assert abs(est - frobenius_norm(m)) < 1e-9

    def test_zero_matrix(self):
        assert spectral_norm_estimate(Matrix.zeros(3, 3), rng=Rng(0)) == 0.0
