"""Multivariate sparse Gaussian process emulator with an MNIW prior.

The model is ``Y = H B + E`` with ``E ~ MN(0, R(tau), Sigma)``, a
matrix-normal inverse-Wishart prior ``B | Sigma ~ MN(B0, Lambda0^{-1},
Sigma)``, ``Sigma ~ IW(S0, delta0)``.  Inverse-Wishart parameters follow the
convention ``E[Sigma] = S / (delta - m - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg, stats

from .design import DesignMatrix, OutputMatrix
from .kernels import (
    KernelSpec,
    PairSet,
    assemble_lower,
    cross_correlation,
    dense_correlation,
    resolve_cutoff,
)
from .sparse import (
    NotPositiveDefinite,
    SparseCorrelation,
    SymbolicCache,
    factorize,
    fill_reducing_ordering,
)


class EmulatorError(ValueError):
    """Invalid model inputs or a numerically degenerate posterior."""


def build_basis(X, kind: str = "linear") -> np.ndarray:
    """Regression matrix ``H``: constant (``q = 1``) or linear (``q = p + 1``)."""
    X = np.asarray(X.values if isinstance(X, DesignMatrix) else X, dtype=float)
    if kind == "constant":
        return np.ones((X.shape[0], 1))
    if kind == "linear":
        return np.column_stack([np.ones(X.shape[0]), X])
    raise EmulatorError(f"unknown basis {kind!r}")


@dataclass
class MniwPrior:
    """Matrix-normal inverse-Wishart prior hyperparameters."""

    B0: np.ndarray
    Lambda0: np.ndarray
    S0: np.ndarray
    delta0: float
    tau_prior: Union[str, Callable] = "uniform"

    def __post_init__(self):
        self.B0 = np.atleast_2d(np.asarray(self.B0, dtype=float))
        self.Lambda0 = np.atleast_2d(np.asarray(self.Lambda0, dtype=float))
        self.S0 = np.atleast_2d(np.asarray(self.S0, dtype=float))
        q, m = self.B0.shape
        if self.Lambda0.shape != (q, q) or self.S0.shape != (m, m):
            raise EmulatorError("prior shapes are inconsistent")
        for name, M in (("Lambda0", self.Lambda0), ("S0", self.S0)):
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() <= 0:
                raise EmulatorError(f"{name} must be symmetric positive definite")
        if not self.delta0 > m - 1:
            raise EmulatorError(f"delta0 must exceed m - 1 = {m - 1}")
        if not (callable(self.tau_prior) or self.tau_prior == "uniform"):
            raise EmulatorError(f"unknown tau prior {self.tau_prior!r}")

    @classmethod
    def default(cls, q: int, m: int) -> "MniwPrior":
        """``B0 = 0``, ``Lambda0 = 1e-4 I``, ``S0 = I``, ``delta0 = m + 2``."""
        return cls(np.zeros((q, m)), 1e-4 * np.eye(q), np.eye(m), m + 2.0)

    def log_tau_prior(self, tau) -> float:
        if callable(self.tau_prior):
            return float(self.tau_prior(tau))
        return 0.0

    def to_dict(self) -> dict:
        return {"B0": self.B0.tolist(), "Lambda0": self.Lambda0.tolist(),
                "S0": self.S0.tolist(), "delta0": float(self.delta0),
                "tau_prior": "uniform" if not callable(self.tau_prior) else "custom"}

    @classmethod
    def from_dict(cls, d: dict) -> "MniwPrior":
        return cls(d["B0"], d["Lambda0"], d["S0"], d["delta0"])


@dataclass
class ConditionalPosterior:
    """Conjugate posterior quantities at a fixed ``tau``."""

    tau: np.ndarray
    factor: object
    Bhat: np.ndarray
    LambdaHat: np.ndarray
    LambdaHat_chol: np.ndarray
    Shat: np.ndarray
    delta_hat: float
    log_marginal: float


@dataclass
class PosteriorDraw:
    """One posterior state ``{B, Sigma, tau}``."""

    B: np.ndarray
    Sigma: np.ndarray
    tau: np.ndarray
    chain: int = 0
    iteration: int = 0
    factor: Optional[object] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {"chain": self.chain, "iteration": self.iteration,
                "tau": self.tau.tolist(), "B": self.B.tolist(),
                "Sigma": self.Sigma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorDraw":
        return cls(np.array(d["B"], dtype=float), np.array(d["Sigma"], dtype=float),
                   np.array(d["tau"], dtype=float), int(d["chain"]), int(d["iteration"]))


@dataclass
class PredictiveDistribution:
    """Matrix-t predictive ``T(Q, D, S, delta)``.

    ``row_scale`` is the full ``n* x n*`` matrix, or ``None`` when only its
    diagonal ``row_scale_diag`` was computed.
    """

    location: np.ndarray
    row_scale: Optional[np.ndarray]
    row_scale_diag: np.ndarray
    col_scale: np.ndarray
    dof: float

    @property
    def m(self) -> int:
        return self.location.shape[1]

    @property
    def marginal_dof(self) -> float:
        return self.dof - self.m + 1.0

    def marginal_scale(self) -> np.ndarray:
        """Scale of the per-entry Student-t marginals."""
        d = np.clip(self.row_scale_diag, 0.0, None)
        return np.sqrt(np.outer(d, np.diag(self.col_scale)) / self.marginal_dof)

    def marginal_variance(self) -> np.ndarray:
        nu = self.marginal_dof
        if nu <= 2:
            return np.full(self.location.shape, np.inf)
        return self.marginal_scale() ** 2 * nu / (nu - 2.0)

    def interval(self, level: float = 0.95):
        """Central marginal intervals ``(lower, upper)``."""
        t = stats.t.ppf(0.5 + level / 2.0, self.marginal_dof)
        half = t * self.marginal_scale()
        return self.location - half, self.location + half


class MsgpModel:
    """Training data, basis, kernel and prior for the emulator.

    Parameters
    ----------
    design : DesignMatrix or ndarray of shape (n, p)
        Scaled inputs.
    outputs : OutputMatrix or ndarray of shape (n, m)
    kernel : KernelSpec
    basis : {"constant", "linear"}
    prior : MniwPrior, optional
        Defaults to :meth:`MniwPrior.default`.
    cutoff : float, optional
        Simplex budget ``c``; defaults to the value implied by ``kernel``.
    ordering : {"mindegree", "rcm", "natural"}
        Fill-reducing ordering, computed once on the candidate-pair pattern.
    """

    def __init__(
        self,
        design,
        outputs,
        kernel: Optional[KernelSpec] = None,
        basis: str = "linear",
        prior: Optional[MniwPrior] = None,
        cutoff: Optional[float] = None,
        ordering: str = "mindegree",
    ):
        if isinstance(design, DesignMatrix):
            if not design.scaled:
                raise EmulatorError("design must be scaled before fitting")
            self.design = design
            X = design.values
        else:
            X = np.asarray(design, dtype=float)
            self.design = None
        if isinstance(outputs, OutputMatrix):
            self.outputs = outputs
            Y = outputs.values
        else:
            Y = np.asarray(outputs, dtype=float)
            Y = Y[:, None] if Y.ndim == 1 else Y
            self.outputs = OutputMatrix(Y)
        if X.ndim != 2 or X.shape[0] != Y.shape[0]:
            raise EmulatorError("design and outputs must have the same number of rows")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise EmulatorError("design and outputs must be finite")
        self.X = np.ascontiguousarray(X)
        self.Y = np.ascontiguousarray(Y)
        self.kernel = kernel or KernelSpec()
        self.basis = basis
        self.H = build_basis(self.X, basis)
        n, q = self.H.shape
        if n <= q or np.linalg.matrix_rank(self.H) < q:
            raise EmulatorError("basis matrix H does not have full column rank")
        self.prior = prior or MniwPrior.default(q, self.m)
        if self.prior.B0.shape != (q, self.m):
            raise EmulatorError("prior B0 shape does not match (q, m)")
        self.cutoff = float(cutoff) if cutoff is not None else resolve_cutoff(self.X, self.kernel)
        self.ordering = ordering
        self._HY = np.ascontiguousarray(np.column_stack([self.H, self.Y]))
        self._pairs = None
        self._perm = None
        self._cache = SymbolicCache()

    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def pairs(self) -> PairSet:
        if self._pairs is None:
            self._pairs = PairSet.build(self.X, self.cutoff)
        return self._pairs

    @property
    def perm(self) -> np.ndarray:
        if self._perm is None:
            self._perm = fill_reducing_ordering(self.pairs.pattern(), self.ordering)
        return self._perm

    def in_simplex(self, tau) -> bool:
        tau = np.asarray(tau, dtype=float)
        return bool(tau.shape == (self.p,) and np.all(tau > 0)
                    and tau.sum() <= self.cutoff * (1 + 1e-12))

    def correlation(self, tau):
        """Training correlation ``R(tau)``: sparse for compact families."""
        tau = np.asarray(tau, dtype=float)
        if not self.kernel.compact:
            return dense_correlation(self.X, self.kernel, tau)
        ip, ix, data = assemble_lower(self.pairs, self.kernel, tau)
        return SparseCorrelation(self.n, ip, ix, data, self.kernel.nugget)

    def factor(self, tau):
        """Cholesky factor of ``R(tau)``; raises :class:`NotPositiveDefinite`."""
        R = self.correlation(tau)
        if isinstance(R, np.ndarray):
            return factorize(R)
        return factorize(R, perm=self.perm, cache=self._cache)

    def with_data(self, X, Y) -> "MsgpModel":
        """Same kernel, basis, prior and cutoff on other training data."""
        return MsgpModel(X, Y, self.kernel, self.basis, self.prior, self.cutoff,
                         self.ordering)

    # ------------------------------------------------------------------
    def posterior(self, tau, factor=None) -> ConditionalPosterior:
        """Conjugate posterior and marginal log density at ``tau``."""
        tau = np.asarray(tau, dtype=float)
        F = self.factor(tau) if factor is None else factor
        W = F.half_solve(self._HY)
        WH, WY = W[:, :self.q], W[:, self.q:]
        Bhat, LambdaHat, Lc = _posterior_b(WH, WY, self.prior)
        Shat, delta_hat = _posterior_sigma(WH, WY, Bhat, self.prior, self.n)
        logdet_lam = 2.0 * np.sum(np.log(np.diag(Lc)))
        sign, logdet_s = np.linalg.slogdet(Shat)
        if sign <= 0:
            raise EmulatorError("posterior scale matrix is not positive definite")
        lm = (-0.5 * self.m * F.logdet + 0.5 * self.m * logdet_lam
              - 0.5 * delta_hat * logdet_s + self.prior.log_tau_prior(tau))
        return ConditionalPosterior(tau, F, Bhat, LambdaHat, Lc, Shat, delta_hat, float(lm))

    def log_marginal_tau(self, tau) -> float:
        """Log marginal posterior density of ``tau`` up to a constant.

        Returns ``-inf`` outside the simplex or when ``R(tau)`` cannot be
        factorized.
        """
        if not self.in_simplex(tau):
            return -np.inf
        try:
            return self.posterior(tau).log_marginal
        except (NotPositiveDefinite, EmulatorError, np.linalg.LinAlgError):
            return -np.inf


# ---------------------------------------------------------------------------
# conjugate updates


def _posterior_b(WH, WY, prior: MniwPrior):
    A = WH.T @ WH + prior.Lambda0
    A = 0.5 * (A + A.T)
    try:
        Ac = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        raise EmulatorError("H^T R^-1 H + Lambda0 is singular") from None
    rhs = WH.T @ WY + prior.Lambda0 @ prior.B0
    Bhat = linalg.cho_solve((Ac, True), rhs)
    Ainv = linalg.cho_solve((Ac, True), np.eye(A.shape[0]))
    LambdaHat = 0.5 * (Ainv + Ainv.T)
    Lc = linalg.cholesky(LambdaHat, lower=True)
    return Bhat, LambdaHat, Lc


def _posterior_sigma(WH, WY, Bhat, prior: MniwPrior, n: int):
    E = WY - WH @ Bhat
    D = Bhat - prior.B0
    Shat = prior.S0 + E.T @ E + D.T @ prior.Lambda0 @ D
    return 0.5 * (Shat + Shat.T), prior.delta0 + n


def conditional_posterior_b(model: MsgpModel, factor):
    """``(Bhat, LambdaHat)`` of ``B | Y, Sigma, tau ~ MN(Bhat, LambdaHat, Sigma)``."""
    W = factor.half_solve(model._HY)
    Bhat, LambdaHat, _ = _posterior_b(W[:, :model.q], W[:, model.q:], model.prior)
    return Bhat, LambdaHat


def conditional_posterior_sigma(model: MsgpModel, Bhat, LambdaHat, factor):
    """``(Shat, delta_hat)`` with ``Shat = S0 + Y'R^-1Y + B0'L0B0 - Bhat'LambdaHat^-1 Bhat``.

    Evaluated in the equivalent residual form for numerical stability.
    """
    W = factor.half_solve(model._HY)
    Shat, delta_hat = _posterior_sigma(W[:, :model.q], W[:, model.q:], Bhat,
                                       model.prior, model.n)
    if np.linalg.eigvalsh(Shat).min() <= 0:
        raise EmulatorError("posterior scale matrix is not positive definite")
    return Shat, delta_hat


def sample_sigma(Shat, delta_hat, rng) -> np.ndarray:
    """Draw ``Sigma ~ IW(Shat, delta_hat)``."""
    S = stats.invwishart.rvs(df=delta_hat, scale=Shat, random_state=rng)
    S = np.atleast_2d(S)
    return 0.5 * (S + S.T)


def sample_b(Bhat, LambdaHat_chol, Sigma, rng) -> np.ndarray:
    """Draw ``B ~ MN(Bhat, LambdaHat, Sigma)``."""
    Z = rng.standard_normal(Bhat.shape)
    Sc = np.linalg.cholesky(Sigma)
    return Bhat + LambdaHat_chol @ Z @ Sc.T


def draw_parameters(post: ConditionalPosterior, rng):
    """Exact joint draw of ``(B, Sigma)`` given ``tau``: Sigma first, then B."""
    Sigma = sample_sigma(post.Shat, post.delta_hat, rng)
    B = sample_b(post.Bhat, post.LambdaHat_chol, Sigma, rng)
    return B, Sigma


# ---------------------------------------------------------------------------
# prediction


def _test_points(model: MsgpModel, Xstar):
    if isinstance(Xstar, DesignMatrix):
        if not Xstar.scaled:
            raise EmulatorError("test design must be scaled")
        Xstar = Xstar.values
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    if Xstar.shape[1] != model.p:
        raise EmulatorError(f"test design has {Xstar.shape[1]} columns, expected {model.p}")
    return np.ascontiguousarray(Xstar)


def _cross(model: MsgpModel, Xstar, tau):
    """``r^T`` as an ``n* x n`` matrix (sparse for compact families)."""
    return cross_correlation(Xstar, model.X, model.kernel, tau)


def residual_weights(model: MsgpModel, B, factor) -> np.ndarray:
    """``alpha = R^{-1} (Y - H B)``, the weights of the conditional mean."""
    return factor.solve(model.Y - model.H @ B)


def predict_mean(model: MsgpModel, Xstar, tau, B, alpha, chunk: int = 20_000):
    """Conditional mean ``H* B + r^T alpha`` evaluated in row chunks."""
    Xstar = _test_points(model, Xstar)
    out = np.empty((Xstar.shape[0], model.m))
    for s in range(0, Xstar.shape[0], chunk):
        Xs = Xstar[s:s + chunk]
        out[s:s + chunk] = build_basis(Xs, model.basis) @ B + _cross(model, Xs, tau) @ alpha
    return out


def _row_terms(model, Xstar, tau, factor, full):
    K = _cross(model, Xstar, tau)
    Kt = K.T.toarray() if hasattr(K, "toarray") else np.ascontiguousarray(K.T)
    V = factor.half_solve(Kt)
    if full:
        Kss = cross_correlation(Xstar, Xstar, model.kernel, tau, dense=True)
        C = Kss - V.T @ V
        C = 0.5 * (C + C.T)
        return K, V, C, np.diag(C).copy()
    return K, V, None, 1.0 - np.einsum("ij,ij->j", V, V)


def predict_matrix_normal(draw: PosteriorDraw, model: MsgpModel, Xstar,
                          full_cov: bool = True, factor=None):
    """Conditional matrix-normal predictive given ``{B, Sigma, tau}``.

    Returns
    -------
    mean : ndarray of shape (n*, m)
        ``H* B + r^T R^{-1} (Y - H B)``.
    row_cov : ndarray
        ``r* - r^T R^{-1} r`` (full ``n* x n*``) or its diagonal.
    """
    Xstar = _test_points(model, Xstar)
    F = factor or draw.factor or model.factor(draw.tau)
    alpha = residual_weights(model, draw.B, F)
    K, V, C, d = _row_terms(model, Xstar, draw.tau, F, full_cov)
    mean = build_basis(Xstar, model.basis) @ draw.B + K @ alpha
    return mean, (C if full_cov else d)


def predict_matrix_t(model: MsgpModel, tau, Xstar, full_cov: bool = True,
                     post: Optional[ConditionalPosterior] = None) -> PredictiveDistribution:
    """Matrix-t predictive with ``B`` and ``Sigma`` integrated out.

    The row scale is ``r* - r^T R^-1 r + (H* - r^T R^-1 H) LambdaHat
    (H* - r^T R^-1 H)^T`` and the column scale is ``Shat``.
    """
    Xstar = _test_points(model, Xstar)
    post = post or model.posterior(tau)
    F = post.factor
    alpha = residual_weights(model, post.Bhat, F)
    K, V, C, d = _row_terms(model, Xstar, tau, F, full_cov)
    Hs = build_basis(Xstar, model.basis)
    WH = F.half_solve(model.H)
    G = Hs - V.T @ WH
    GL = G @ post.LambdaHat_chol
    location = Hs @ post.Bhat + K @ alpha
    if full_cov:
        D = C + GL @ GL.T
        D = 0.5 * (D + D.T)
        diag = np.diag(D).copy()
    else:
        D = None
        diag = d + np.einsum("ij,ij->i", GL, GL)
    return PredictiveDistribution(location, D, diag, post.Shat.copy(), post.delta_hat)


@dataclass
class PredictiveSummary:
    """Pointwise summaries of a mixture of matrix-t predictives over ``tau``."""

    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def predict_posterior(model: MsgpModel, taus, Xstar, level: float = 0.95,
                      tol: float = 1e-10) -> PredictiveSummary:
    """Posterior predictive over ``tau`` draws with ``B`` and ``Sigma`` integrated out.

    Each ``tau`` contributes one marginal Student-t per test point and output;
    the mixture mean, standard deviation and central quantiles (by bisection
    on the averaged CDF) are returned.
    """
    Xstar = _test_points(model, Xstar)
    taus = [np.asarray(t, dtype=float) for t in taus]
    if not taus:
        raise EmulatorError("no tau values supplied")
    locs, scales = [], []
    last, pd = None, None
    for tau in taus:
        if last is None or not np.array_equal(tau, last):
            pd = predict_matrix_t(model, tau, Xstar, full_cov=False)
            last = tau
        locs.append(pd.location)
        scales.append(pd.marginal_scale())
    loc = np.array(locs)
    sc = np.maximum(np.array(scales), 1e-300)
    dof = pd.marginal_dof
    mean = loc.mean(axis=0)
    var_t = sc**2 * dof / (dof - 2.0) if dof > 2 else np.full_like(sc, np.inf)
    sd = np.sqrt(var_t.mean(axis=0) + loc.var(axis=0))

    def quantile(prob):
        z = stats.t.ppf(prob, dof)
        lo = (loc + z * sc).min(axis=0) - 1.0
        hi = (loc + z * sc).max(axis=0) + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            cdf = stats.t.cdf((mid - loc) / sc, dof).mean(axis=0)
            below = cdf < prob
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo) < tol:
                break
        return 0.5 * (lo + hi)

    if len(loc) == 1:
        half = stats.t.ppf(0.5 + level / 2.0, dof) * sc[0]
        lower, upper = mean - half, mean + half
    else:
        lower, upper = quantile(0.5 - level / 2.0), quantile(0.5 + level / 2.0)
    return PredictiveSummary(mean, sd, lower, upper, level)
