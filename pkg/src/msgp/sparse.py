"""Sparse symmetric storage and Cholesky factorization.

The factorization is an up-looking sparse Cholesky with a separate symbolic
phase (elimination tree and column counts) cached by sparsity-pattern hash,
so repeated factorizations with an unchanged pattern skip the analysis.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, sparse
from scipy.linalg.lapack import dpotrf
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from ._backend import core


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a non-positive pivot is met during factorization."""

    def __init__(self, pivot: int, message: Optional[str] = None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


@dataclass
class SparseCorrelation:
    """Symmetric matrix stored as the lower triangle in CSC layout.

    Within each column the diagonal entry comes first and row indices are
    strictly increasing.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    nugget: float = 0.0

    @classmethod
    def from_dense(cls, A, nugget: float = 0.0) -> "SparseCorrelation":
        """Lower triangle of a dense symmetric matrix, dropping exact zeros."""
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        low = sparse.csc_matrix(np.tril(A))
        low.sort_indices()
        return cls(
            A.shape[0], low.indptr.astype(np.int64), low.indices.astype(np.int64),
            low.data.copy(), nugget,
        )

    @classmethod
    def identity(cls, n: int) -> "SparseCorrelation":
        return cls(n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64),
                   np.ones(n))

    @property
    def nnz_offdiag(self) -> int:
        """Stored entries strictly below the diagonal."""
        return int(self.indptr[-1] - self.n)

    def zero_fraction(self) -> float:
        """Fraction of the ``n(n-1)/2`` off-diagonal pairs not stored."""
        total = self.n * (self.n - 1) / 2
        return 1.0 - self.nnz_offdiag / total if total else 1.0

    def lower(self) -> sparse.csc_matrix:
        return sparse.csc_matrix((self.data, self.indices, self.indptr),
                                 shape=(self.n, self.n))

    def to_scipy(self) -> sparse.csc_matrix:
        """Full symmetric matrix as a scipy CSC matrix."""
        low = self.lower()
        return (low + sparse.tril(low, -1).T).tocsc()

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def with_nugget(self, nugget: float) -> "SparseCorrelation":
        """Copy with the diagonal reset to ``1 + nugget``."""
        data = self.data.copy()
        data[self.indptr[:-1]] += nugget - self.nugget
        return SparseCorrelation(self.n, self.indptr, self.indices, data, nugget)


# ---------------------------------------------------------------------------
# orderings


def minimum_degree(pattern) -> np.ndarray:
    """Multiple minimum degree ordering of a symmetric pattern.

    Uses SuperLU's MMD on ``A + A^T`` with pivoting disabled, applied to a
    diagonally dominant matrix with the given pattern.
    """
    P = sparse.csc_matrix(pattern, dtype=float)
    n = P.shape[0]
    P.data[:] = 1.0
    P = (P + P.T).tocsc()
    P.setdiag(0.0)
    P.eliminate_zeros()
    P = (P + sparse.identity(n, format="csc") * (n + 1.0)).tocsc()
    lu = splu(P, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options={"SymmetricMode": True})
    # perm_c[i] is the new position of column i; invert to our convention
    return inverse_permutation(lu.perm_c)


def fill_reducing_ordering(pattern, method: str = "mindegree") -> np.ndarray:
    """Permutation ``perm`` such that row ``k`` of ``P A P^T`` is row ``perm[k]``."""
    n = pattern.shape[0]
    if method == "natural":
        return np.arange(n, dtype=np.int64)
    if method == "rcm":
        return np.asarray(
            reverse_cuthill_mckee(sparse.csr_matrix(pattern), symmetric_mode=True),
            dtype=np.int64,
        )
    if method == "mindegree":
        return minimum_degree(pattern)
    raise ValueError(f"unknown ordering {method!r}")


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    pinv = np.empty_like(perm)
    pinv[perm] = np.arange(perm.size, dtype=np.int64)
    return pinv


# ---------------------------------------------------------------------------
# factors


class _FactorBase:
    n: int
    logdet: float

    def _as2d(self, B):
        B = np.asarray(B, dtype=float)
        if B.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: expected {self.n} rows, got {B.shape[0]}")
        return B.reshape(self.n, -1), B.ndim == 1

    def solve(self, B) -> np.ndarray:
        raise NotImplementedError

    def half_solve(self, B) -> np.ndarray:
        raise NotImplementedError

    def quad_form(self, A, B=None) -> np.ndarray:
        """``A^T R^{-1} B``; symmetrized when ``B`` is omitted or is ``A``."""
        WA = self.half_solve(np.asarray(A, dtype=float).reshape(self.n, -1))
        if B is None or B is A:
            out = WA.T @ WA
            return 0.5 * (out + out.T)
        WB = self.half_solve(np.asarray(B, dtype=float).reshape(self.n, -1))
        return WA.T @ WB


@dataclass
class CholeskyFactor(_FactorBase):
    """Sparse factor ``P R P^T = L L^T``.

    ``perm[k]`` is the original index of permuted row ``k``.
    """

    n: int
    perm: np.ndarray
    Lp: np.ndarray
    Li: np.ndarray = field(repr=False)
    Lx: np.ndarray = field(repr=False)
    nugget: float = 0.0

    def __post_init__(self):
        self.logdet = float(2.0 * np.sum(np.log(self.Lx[self.Lp[:-1]])))

    @property
    def nnz(self) -> int:
        return int(self.Lp[-1])

    @property
    def L(self) -> sparse.csc_matrix:
        return sparse.csc_matrix((self.Lx, self.Li, self.Lp), shape=(self.n, self.n))

    def half_solve(self, B) -> np.ndarray:
        """``L^{-1} P B``."""
        B2, vec = self._as2d(B)
        X = np.ascontiguousarray(B2[self.perm])
        core.lsolve(self.n, self.Lp, self.Li, self.Lx, X)
        return X[:, 0] if vec else X

    def solve(self, B) -> np.ndarray:
        """``R^{-1} B``."""
        B2, vec = self._as2d(B)
        X = np.ascontiguousarray(B2[self.perm])
        core.lsolve(self.n, self.Lp, self.Li, self.Lx, X)
        core.ltsolve(self.n, self.Lp, self.Li, self.Lx, X)
        out = np.empty_like(X)
        out[self.perm] = X
        return out[:, 0] if vec else out


@dataclass
class DenseCholeskyFactor(_FactorBase):
    """Dense LAPACK factor ``R = L L^T`` with the same interface."""

    n: int
    L: np.ndarray = field(repr=False)
    nugget: float = 0.0

    def __post_init__(self):
        self.logdet = float(2.0 * np.sum(np.log(np.diag(self.L))))
        self.perm = np.arange(self.n, dtype=np.int64)

    @property
    def nnz(self) -> int:
        return self.n * (self.n + 1) // 2

    def half_solve(self, B) -> np.ndarray:
        B2, vec = self._as2d(B)
        X = linalg.solve_triangular(self.L, B2, lower=True, check_finite=False)
        return X[:, 0] if vec else X

    def solve(self, B) -> np.ndarray:
        B2, vec = self._as2d(B)
        X = linalg.cho_solve((self.L, True), B2, check_finite=False)
        return X[:, 0] if vec else X


# ---------------------------------------------------------------------------
# factorization


class SymbolicCache:
    """LRU cache of symbolic analyses keyed by the permuted pattern."""

    def __init__(self, maxsize: int = 8):
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(Cp, Ci) -> bytes:
        h = hashlib.blake2b(digest_size=16)
        h.update(np.ascontiguousarray(Cp).tobytes())
        h.update(np.ascontiguousarray(Ci).tobytes())
        return h.digest()

    def analyse(self, n, Cp, Ci):
        k = self.key(Cp, Ci)
        hit = self._store.get(k)
        if hit is not None:
            self.hits += 1
            self._store.move_to_end(k)
            return hit
        self.misses += 1
        parent = core.etree(n, Cp, Ci)
        counts = core.col_counts(n, Cp, Ci, parent)
        Lp = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=Lp[1:])
        self._store[k] = (parent, Lp)
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return parent, Lp


def _numeric(R: SparseCorrelation, pinv, perm, cache):
    Cp, Ci, Cx = core.symperm_upper(R.n, R.indptr, R.indices, R.data, pinv)
    if cache is None:
        parent = core.etree(R.n, Cp, Ci)
        Lp = np.zeros(R.n + 1, dtype=np.int64)
        np.cumsum(core.col_counts(R.n, Cp, Ci, parent), out=Lp[1:])
    else:
        parent, Lp = cache.analyse(R.n, Cp, Ci)
    Li, Lx, status = core.chol_numeric(R.n, Cp, Ci, Cx, parent, Lp)
    if status >= 0:
        return None, int(perm[status])
    return CholeskyFactor(R.n, perm, Lp, Li, Lx, R.nugget), -1


def factorize(
    R,
    perm=None,
    ordering: str = "mindegree",
    cache: Optional[SymbolicCache] = None,
    retry: bool = True,
):
    """Cholesky factorization of a correlation matrix.

    Parameters
    ----------
    R : SparseCorrelation or ndarray
        Sparse matrices use the sparse up-looking factorization; dense arrays
        use LAPACK.
    perm : array_like, optional
        Precomputed fill-reducing permutation; otherwise computed from the
        pattern of ``R`` with ``ordering``.
    cache : SymbolicCache, optional
        Reuses symbolic analyses across calls.
    retry : bool
        On a non-positive pivot, retry once with the nugget multiplied by 10.

    Raises
    ------
    NotPositiveDefinite
        Carries the original index of the failing pivot.
    """
    if isinstance(R, np.ndarray):
        return _factorize_dense(R, retry)
    if perm is None:
        perm = fill_reducing_ordering(R.to_scipy(), ordering)
    perm = np.asarray(perm, dtype=np.int64)
    pinv = inverse_permutation(perm)
    factor, pivot = _numeric(R, pinv, perm, cache)
    if factor is None and retry:
        factor, pivot = _numeric(R.with_nugget(10.0 * R.nugget), pinv, perm, cache)
    if factor is None:
        raise NotPositiveDefinite(pivot)
    return factor


def _factorize_dense(R, retry):
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    L, info = dpotrf(R, lower=1, clean=1)
    if info == 0 and np.all(np.isfinite(np.diag(L))):
        return DenseCholeskyFactor(n, L, float(R[0, 0] - 1.0) if n else 0.0)
    if retry:
        bump = 9.0 * max(float(np.max(np.diag(R))) - 1.0, 0.0)
        return _factorize_dense(R + bump * np.eye(n), False)
    raise NotPositiveDefinite(info - 1 if info > 0 else -1)


def solve(factor, B) -> np.ndarray:
    """``R^{-1} B`` with the residual guarantee of a backward-stable factor."""
    return factor.solve(B)


def quad_form(factor, A, B=None) -> np.ndarray:
    """``A^T R^{-1} B`` computed from half solves."""
    return factor.quad_form(A, B)


def block_diag(a: SparseCorrelation, b: SparseCorrelation) -> SparseCorrelation:
    """Block-diagonal concatenation of two stored matrices."""
    indptr = np.concatenate([a.indptr, a.indptr[-1] + b.indptr[1:]])
    indices = np.concatenate([a.indices, b.indices + a.n])
    data = np.concatenate([a.data, b.data])
    return SparseCorrelation(a.n + b.n, indptr, indices, data, a.nugget)
