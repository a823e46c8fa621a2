import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msgp.kernels import KernelSpec, assemble_sparse_correlation, calibrate_cutoff
from msgp.sparse import (
    CholeskyFactor,
    DenseCholeskyFactor,
    NotPositiveDefinite,
    SparseCorrelation,
    SymbolicCache,
    block_diag,
    factorize,
    fill_reducing_ordering,
    inverse_permutation,
    quad_form,
    solve,
)

ORDERINGS = ["mindegree", "rcm", "natural"]


def random_sparse(n, p, omega, seed, family="bohman"):
    X = np.random.default_rng(seed).uniform(-1, 1, (n, p))
    c = calibrate_cutoff(X, omega)
    # keep weights away from zero while staying strictly inside the simplex
    w = np.random.default_rng(seed + 1).dirichlet(np.ones(p)) + 1e-3
    tau = c * w / (w.sum() * (1 + 1e-9))
    return assemble_sparse_correlation(X, KernelSpec(family, omega=omega), tau)


class TestFactorize:
    def test_identity(self):
        f = factorize(SparseCorrelation.identity(7))
        assert f.logdet == 0.0
        b = np.arange(7.0)
        np.testing.assert_array_equal(f.solve(b), b)
        assert f.nnz == 7

    def test_two_by_two(self):
        R = SparseCorrelation.from_dense([[1.0, 0.5], [0.5, 1.0]])
        f = factorize(R)
        np.testing.assert_allclose(f.logdet, np.log(0.75), rtol=1e-14)
        np.testing.assert_allclose(f.solve([1.0, 0.0]), np.array([1.0, -0.5]) / 0.75, rtol=1e-14)

    @pytest.mark.parametrize("ordering", ORDERINGS)
    def test_dense_oracle(self, ordering):
        R = random_sparse(150, 3, 0.9, 3)
        A = R.toarray()
        f = factorize(R, ordering=ordering)
        assert isinstance(f, CholeskyFactor)
        sign, ld = np.linalg.slogdet(A)
        assert sign == 1.0
        np.testing.assert_allclose(f.logdet, ld, rtol=1e-10)
        B = np.random.default_rng(0).standard_normal((150, 3))
        np.testing.assert_allclose(f.solve(B), np.linalg.solve(A, B), rtol=1e-8, atol=1e-10)
        L = f.L.toarray()
        Ap = A[np.ix_(f.perm, f.perm)]
        np.testing.assert_allclose(L @ L.T, Ap, atol=1e-12)

    def test_fill_reducing_helps(self):
        R = random_sparse(300, 4, 0.95, 5)
        nat = factorize(R, ordering="natural").nnz
        md = factorize(R, ordering="mindegree").nnz
        assert md <= nat
        assert md < R.n * (R.n + 1) // 2
        R = random_sparse(500, 4, 0.9, 5)
        assert factorize(R, ordering="mindegree").nnz < 0.5 * factorize(R, ordering="natural").nnz

    def test_precomputed_perm(self):
        R = random_sparse(80, 2, 0.9, 7)
        perm = fill_reducing_ordering(R.to_scipy(), "rcm")
        f = factorize(R, perm=perm)
        np.testing.assert_array_equal(f.perm, perm)
        np.testing.assert_array_equal(inverse_permutation(perm)[perm], np.arange(80))

    def test_unknown_ordering(self):
        with pytest.raises(ValueError):
            factorize(SparseCorrelation.identity(3), ordering="amd2")

    def test_not_positive_definite(self):
        A = np.array([[1.0, 0.0, 0.9], [0.0, 1.0, 0.9], [0.9, 0.9, 1.0]])
        R = SparseCorrelation.from_dense(A)
        with pytest.raises(NotPositiveDefinite) as info:
            factorize(R, ordering="natural", retry=False)
        assert info.value.pivot == 2
        with pytest.raises(NotPositiveDefinite):
            factorize(A, retry=False)

    def test_retry_with_larger_nugget(self):
        A = np.array([[1.0, 0.0, 0.9], [0.0, 1.0, 0.9], [0.9, 0.9, 1.0]])
        nug = 0.07  # fails at 0.07, succeeds at 0.7
        assert np.linalg.eigvalsh(A + nug * np.eye(3)).min() < 0
        assert np.linalg.eigvalsh(A + 10 * nug * np.eye(3)).min() > 0
        R = SparseCorrelation.from_dense(A + nug * np.eye(3), nugget=nug)
        f = factorize(R, ordering="natural")
        assert f.nugget == pytest.approx(0.7)
        np.testing.assert_allclose(f.logdet, np.linalg.slogdet(A + 0.7 * np.eye(3))[1])
        fd = factorize(A + nug * np.eye(3))
        assert isinstance(fd, DenseCholeskyFactor)
        np.testing.assert_allclose(fd.logdet, f.logdet, rtol=1e-12)

    def test_dense_path_matches_sparse(self):
        R = random_sparse(60, 3, 0.8, 11)
        fs, fd = factorize(R), factorize(R.toarray())
        np.testing.assert_allclose(fd.logdet, fs.logdet, rtol=1e-12)
        B = np.random.default_rng(2).standard_normal((60, 2))
        np.testing.assert_allclose(fd.solve(B), fs.solve(B), rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(fd.quad_form(B), fs.quad_form(B), rtol=1e-9, atol=1e-12)

    def test_dimension_mismatch(self):
        f = factorize(SparseCorrelation.identity(3))
        with pytest.raises(ValueError):
            f.solve(np.ones(4))

    def test_symbolic_cache(self):
        R = random_sparse(100, 3, 0.9, 1)
        cache = SymbolicCache(maxsize=2)
        perm = fill_reducing_ordering(R.to_scipy())
        f1 = factorize(R, perm=perm, cache=cache)
        R2 = SparseCorrelation(R.n, R.indptr, R.indices, R.data * 0.5, R.nugget)
        R2.data[R2.indptr[:-1]] = 1.0
        f2 = factorize(R2, perm=perm, cache=cache)
        assert cache.misses == 1 and cache.hits == 1
        np.testing.assert_allclose(f2.logdet, np.linalg.slogdet(R2.toarray())[1], rtol=1e-10)
        assert f1.logdet != f2.logdet


@given(n=st.integers(2, 80), p=st.integers(1, 4), seed=st.integers(0, 10**6),
       omega=st.floats(0.3, 0.97), ordering=st.sampled_from(ORDERINGS))
def test_solve_residual(n, p, seed, omega, ordering):
    R = random_sparse(n, p, omega, seed)
    f = factorize(R, ordering=ordering)
    b = np.random.default_rng(seed).standard_normal(n)
    x = solve(f, b)
    A = R.to_scipy()
    res = np.linalg.norm(A @ x - b)
    assert res <= 1e-10 * np.linalg.norm(b) * max(1.0, np.linalg.cond(A.toarray()))


@given(n=st.integers(2, 60), seed=st.integers(0, 10**6))
def test_quad_form_symmetric(n, seed):
    R = random_sparse(n, 2, 0.8, seed)
    f = factorize(R)
    A = np.random.default_rng(seed).standard_normal((n, 3))
    Q = quad_form(f, A)
    np.testing.assert_array_equal(Q, Q.T)
    assert np.linalg.eigvalsh(Q).min() >= -1e-10 * max(1.0, abs(Q).max())
    np.testing.assert_allclose(Q, A.T @ np.linalg.solve(R.toarray(), A), rtol=1e-7, atol=1e-9)


@given(n1=st.integers(1, 40), n2=st.integers(1, 40), seed=st.integers(0, 10**6))
def test_block_diagonal_logdet_additive(n1, n2, seed):
    a = random_sparse(n1 + 1, 2, 0.7, seed)
    b = random_sparse(n2 + 1, 3, 0.7, seed + 5)
    ab = block_diag(a, b)
    np.testing.assert_allclose(factorize(ab).logdet,
                               factorize(a).logdet + factorize(b).logdet, rtol=1e-10, atol=1e-12)


def test_sparse_storage_smaller_than_dense():
    R = random_sparse(500, 4, 0.9, 0)
    assert R.zero_fraction() >= 0.9
    assert R.indptr[-1] < R.n * R.n
