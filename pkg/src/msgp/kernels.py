"""Stationary correlation functions and correlation-matrix assembly.

All compactly supported families are applied as a product over input
dimensions, ``R(x, x') = prod_k R(|x_k - x'_k|; tau_k)``, with ``tau_k`` the
per-dimension support radius.  Entries with any ``|x_k - x'_k| >= tau_k`` are
structurally zero and never stored.  The power exponential family is dense and
uses ``tau_k`` as a length scale, ``exp(-(t / tau_k)^2)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.spatial.distance import pdist

from ._backend import core

FAMILIES = {
    "bohman": 0,
    "truncated_power": 1,
    "matern_wendland": 2,
    "power_exponential": 3,
}

# Lower bounds nu_p(alpha) for the truncated power function, keyed on alpha.
# The two anchor pairs (3/2, 2) and (5/3, 3) lie on nu = 1 / (2 - alpha); the
# remaining entries follow the same curve up to alpha = 1.955.
NU_BOUND_TABLE = np.array(
    [
        [1.5, 2.0],
        [5.0 / 3.0, 3.0],
        [1.75, 4.0],
        [1.8, 5.0],
        [1.85, 1.0 / 0.15],
        [1.9, 10.0],
        [1.955, 1.0 / 0.045],
    ]
)


class KernelError(ValueError):
    """Invalid kernel parameters or cut-off vector."""


def nu_lower_bound(alpha: float) -> float:
    """Smallest admissible ``nu`` for the truncated power function.

    Parameters
    ----------
    alpha : float
        Shape exponent in ``(0, 2)``.

    Returns
    -------
    float
        The tabulated bound, linearly interpolated between table entries.
        For ``alpha <= 1.5`` the bound is 2.

    Raises
    ------
    KernelError
        If ``alpha`` lies outside ``(0, 1.955]``.
    """
    if not 0.0 < alpha < 2.0:
        raise KernelError(f"truncated power requires 0 < alpha < 2, got {alpha}")
    if alpha <= NU_BOUND_TABLE[0, 0]:
        return float(NU_BOUND_TABLE[0, 1])
    if alpha > NU_BOUND_TABLE[-1, 0] + 1e-12:
        raise KernelError(
            f"truncated power alpha={alpha} exceeds the tabulated range "
            f"(max {NU_BOUND_TABLE[-1, 0]})"
        )
    return float(np.interp(alpha, NU_BOUND_TABLE[:, 0], NU_BOUND_TABLE[:, 1]))


@dataclass(frozen=True)
class KernelSpec:
    """Correlation family and its fixed hyperparameters.

    Parameters
    ----------
    family : str
        One of ``bohman``, ``truncated_power``, ``matern_wendland``,
        ``power_exponential``.
    alpha, nu : float
        Truncated power shape parameters.
    phi : float
        Matérn (smoothness 5/2) inverse range, shared by all dimensions.
    taper_dim, taper_k : int
        Wendland parameters ``s`` and ``k``; ``ell = floor(s/2) + k + 1``.
    omega : float
        Target fraction of structurally zero off-diagonal pairs.
    nugget : float
        Jitter added to the diagonal.
    cutoff : float, optional
        Explicit simplex budget ``c``; overrides the calibration from ``omega``.
    cutoff_rule : str
        ``"quantile"`` (at least ``omega`` of pairs zero) or ``"literal"``.
    """

    family: str = "bohman"
    alpha: float = 1.5
    nu: float = 2.0
    phi: float = 1.0
    taper_dim: int = 1
    taper_k: int = 2
    omega: float = 0.9
    nugget: float = 1e-8
    cutoff: Optional[float] = None
    cutoff_rule: str = "quantile"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelError(
                f"unknown kernel family {self.family!r}; "
                f"choose from {sorted(FAMILIES)}"
            )
        if self.family == "truncated_power":
            bound = nu_lower_bound(self.alpha)
            if self.nu < bound - 1e-12:
                raise KernelError(
                    f"truncated power requires nu >= nu_p(alpha) = {bound:.6g} "
                    f"for alpha={self.alpha}, got nu={self.nu}"
                )
        if self.family == "matern_wendland":
            if self.phi <= 0:
                raise KernelError("matern_wendland requires phi > 0")
            if self.taper_dim < 1 or self.taper_k < 0 or self.ell < 1:
                raise KernelError("invalid Wendland parameters")
        if not 0.0 < self.omega < 1.0:
            raise KernelError(f"omega must lie in (0, 1), got {self.omega}")
        if self.nugget < 0:
            raise KernelError("nugget must be non-negative")
        if self.cutoff is not None and not self.cutoff > 0:
            raise KernelError("cutoff must be positive")
        if self.cutoff_rule not in ("quantile", "literal"):
            raise KernelError(f"unknown cutoff rule {self.cutoff_rule!r}")

    @property
    def code(self) -> int:
        return FAMILIES[self.family]

    @property
    def ell(self) -> int:
        return self.taper_dim // 2 + self.taper_k + 1

    @property
    def compact(self) -> bool:
        return self.family != "power_exponential"

    @property
    def params(self) -> np.ndarray:
        """Parameter vector ``[alpha, nu, phi, ell]`` passed to the core."""
        return np.array([self.alpha, self.nu, self.phi, float(self.ell)])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KernelError(f"unknown kernel keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# scalar correlation functions


def _as_lag(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise KernelError("lag t must be non-negative")
    return t


def _check_tau(tau):
    if not tau > 0:
        raise KernelError(f"tau must be positive, got {tau}")


def corr_bohman(t, tau: float):
    """Bohman correlation, exactly zero for ``t >= tau``."""
    _check_tau(tau)
    return core.corr_1d(_as_lag(t), float(tau), 0, np.zeros(4)).reshape(np.shape(t))


def corr_trunc_power(t, tau: float, alpha: float, nu: float):
    """Truncated power correlation ``(1 - (t/tau)^alpha)^nu``."""
    _check_tau(tau)
    spec = KernelSpec("truncated_power", alpha=alpha, nu=nu)
    return core.corr_1d(_as_lag(t), float(tau), 1, spec.params).reshape(np.shape(t))


def wendland(u, ell: float):
    """Normalized Wendland function ``phi_{s,2}`` on ``u = t / tau``."""
    u = np.asarray(u, dtype=float)
    v = np.clip(1.0 - u, 0.0, None)
    return v ** (ell + 2) * ((ell**2 + 4 * ell + 3) * u**2 + (3 * ell + 6) * u + 3) / 3.0


def matern52(t, phi: float):
    """Matérn correlation with smoothness 5/2 in closed form."""
    a = np.asarray(t, dtype=float) * phi
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


def corr_matern_wendland(t, phi: float, tau: float, k: int = 2, s: int = 1):
    """Matérn(5/2) correlation tapered by a normalized Wendland function."""
    _check_tau(tau)
    if phi <= 0:
        raise KernelError("phi must be positive")
    spec = KernelSpec("matern_wendland", phi=phi, taper_dim=s, taper_k=k)
    return core.corr_1d(_as_lag(t), float(tau), 2, spec.params).reshape(np.shape(t))


def corr_power_exponential(x, y, phi) -> float:
    """Dense product kernel ``prod_k exp(-phi_k |x_k - y_k|^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if x.shape != y.shape or x.shape != phi.shape:
        raise KernelError("dimension mismatch between x, y and phi")
    if np.any(phi <= 0):
        raise KernelError("phi must be positive")
    return float(np.exp(-np.sum(phi * (x - y) ** 2)))


def correlation_1d(t, tau: float, spec: KernelSpec):
    """Evaluate one dimension of the product kernel for ``spec``."""
    return core.corr_1d(_as_lag(t), float(tau), spec.code, spec.params).reshape(
        np.shape(t)
    )


# ---------------------------------------------------------------------------
# cut-off calibration


def calibrate_cutoff(X, omega: float, rule: str = "quantile") -> float:
    """Simplex budget ``c`` for a scaled design.

    Parameters
    ----------
    X : ndarray of shape (n, p)
        Scaled design.
    omega : float
        Target fraction of off-diagonal pairs that must be structurally zero.
    rule : {"quantile", "literal"}
        ``"quantile"`` returns the largest pair distance ``c`` such that at
        least ``omega`` of the ``n(n-1)/2`` L1 distances are ``>= c``.
        ``"literal"`` returns the ``floor(N * omega)``-th smallest distance.

    Returns
    -------
    float
        The cut-off ``c``.  Since ``sum(tau) <= c`` every pair at L1 distance
        ``>= c`` has some ``|dx_k| >= tau_k`` and is zero in the product kernel.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise KernelError("calibrate_cutoff needs at least two design points")
    if not 0.0 < omega < 1.0:
        raise KernelError(f"omega must lie in (0, 1), got {omega}")
    d = np.sort(pdist(X, "cityblock"))
    N = d.size
    if rule == "literal":
        k = max(int(np.floor(N * omega)), 1)
        return float(d[k - 1])
    if rule != "quantile":
        raise KernelError(f"unknown cutoff rule {rule!r}")
    need = N * omega
    if need < 1.0:
        return float(np.nextafter(d[-1], np.inf))
    k = int(np.ceil(need - 1e-9))
    return float(d[N - k])


def check_simplex(tau, c: float, tol: float = 1e-9) -> np.ndarray:
    """Validate ``tau`` against the simplex ``{tau_k > 0, sum(tau) <= c}``."""
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 1:
        raise KernelError("tau must be a vector")
    if np.any(~np.isfinite(tau)) or np.any(tau <= 0):
        raise KernelError("tau entries must be positive and finite")
    if tau.sum() > c * (1.0 + tol):
        raise KernelError(f"tau outside simplex: sum(tau)={tau.sum():.6g} > c={c:.6g}")
    return tau


# ---------------------------------------------------------------------------
# assembly


@dataclass
class PairSet:
    """Candidate pairs ``i > j`` whose L1 distance is below the cut-off.

    Every pattern produced by a ``tau`` in the simplex is a subset of this
    set, so it is computed once per design and reused for every ``tau``.
    """

    n: int
    p: int
    cutoff: float
    ptr: np.ndarray
    rows: np.ndarray
    diffs: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, X, cutoff: float) -> "PairSet":
        X = np.ascontiguousarray(X, dtype=float)
        ptr, rows, diffs = core.candidate_pairs(X, float(cutoff))
        return cls(X.shape[0], X.shape[1], float(cutoff), ptr, rows, diffs)

    @property
    def size(self) -> int:
        return int(self.rows.size)

    def pattern(self) -> sparse.csc_matrix:
        """Symmetric boolean pattern of the candidate set plus the diagonal."""
        cols = np.repeat(np.arange(self.n), np.diff(self.ptr))
        ones = np.ones(self.size, dtype=bool)
        low = sparse.csc_matrix((ones, (self.rows, cols)), shape=(self.n, self.n))
        return (low + low.T + sparse.identity(self.n, dtype=bool, format="csc")).tocsc()


def assemble_lower(pairs: PairSet, spec: KernelSpec, tau, nugget=None):
    """Lower-triangular CSC arrays ``(indptr, indices, data)`` for ``tau``."""
    nug = spec.nugget if nugget is None else nugget
    return core.assemble_lower(
        pairs.n, pairs.ptr, pairs.rows, pairs.diffs,
        np.asarray(tau, dtype=float), spec.code, spec.params, float(nug),
    )


def dense_correlation(X, spec: KernelSpec, tau, nugget=None) -> np.ndarray:
    """Full ``n x n`` correlation matrix by direct evaluation.

    Used for the power exponential family and as a brute-force reference for
    the sparse assembly.
    """
    X = np.ascontiguousarray(X, dtype=float)
    tau = np.asarray(tau, dtype=float)
    nug = spec.nugget if nugget is None else nugget
    return core.dense_corr(X, tau, spec.code, spec.params, float(nug))


def cross_correlation(Xa, Xb, spec: KernelSpec, tau, dense: bool = False):
    """Cross-correlation ``R(Xa[i], Xb[j])`` between two point sets.

    Returns a ``scipy.sparse.csr_matrix`` for compact families (zero beyond
    support) and a dense array for the power exponential family or when
    ``dense`` is set.  No nugget is applied.
    """
    Xa = np.ascontiguousarray(Xa, dtype=float)
    Xb = np.ascontiguousarray(Xb, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if Xa.shape[1] != Xb.shape[1] or Xa.shape[1] != tau.size:
        raise KernelError("dimension mismatch in cross_correlation")
    if spec.family == "power_exponential":
        A = Xa / tau
        B = Xb / tau
        G = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :]
        G -= 2.0 * (A @ B.T)
        np.maximum(G, 0.0, out=G)
        return np.exp(-G, out=G)
    indptr, indices, data = core.cross_correlation(Xa, Xb, tau, spec.code, spec.params)
    M = sparse.csr_matrix((data, indices, indptr), shape=(Xa.shape[0], Xb.shape[0]))
    return M.toarray() if dense else M


def assemble_sparse_correlation(X, spec: KernelSpec, tau, cutoff=None):
    """Assemble the sparse training correlation for a scaled design.

    Parameters
    ----------
    X : ndarray of shape (n, p)
    spec : KernelSpec
    tau : array_like of shape (p,)
        Cut-off vector; must satisfy ``sum(tau) <= c``.
    cutoff : float, optional
        Simplex budget ``c``.  Defaults to ``spec.cutoff`` or the calibrated
        value for ``spec.omega``.

    Returns
    -------
    SparseCorrelation
    """
    from .sparse import SparseCorrelation

    X = np.asarray(X, dtype=float)
    c = resolve_cutoff(X, spec) if cutoff is None else float(cutoff)
    tau = check_simplex(tau, c)
    if tau.size != X.shape[1]:
        raise KernelError("tau length must equal the number of inputs")
    pairs = PairSet.build(X, c if spec.compact else np.inf)
    indptr, indices, data = assemble_lower(pairs, spec, tau)
    return SparseCorrelation(X.shape[0], indptr, indices, data, spec.nugget)


def resolve_cutoff(X, spec: KernelSpec) -> float:
    """The simplex budget implied by ``spec`` for design ``X``."""
    if spec.cutoff is not None:
        return float(spec.cutoff)
    return calibrate_cutoff(X, spec.omega, spec.cutoff_rule)
