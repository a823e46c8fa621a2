"""Variance-based sensitivity indices from emulator posterior draws.

For every retained posterior draw the emulator mean is evaluated on the
Saltelli matrices ``A0``, ``A_j`` (column ``j`` from ``A0``, the rest
resampled) and ``A_~j`` (only column ``j`` resampled).  The per-draw output
covariance ``Omega`` is split into first-order, interaction and complementary
blocks, from which univariate, trace-based and projection indices follow.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .emulator import MsgpModel, PosteriorDraw, predict_mean, residual_weights

ESTIMATORS = ("difference", "centered", "uncentered")


class SensitivityError(ValueError):
    """Invalid sensitivity-analysis inputs."""


# ---------------------------------------------------------------------------
# sampling matrices


@dataclass
class SaltelliMatrices:
    """Base sample ``A0`` and the resampling matrix used to build ``A_j``, ``A_~j``."""

    A0: np.ndarray
    Bm: np.ndarray

    @property
    def s(self) -> int:
        return self.A0.shape[0]

    @property
    def p(self) -> int:
        return self.A0.shape[1]

    def Aj(self, j: int) -> np.ndarray:
        """Column ``j`` shared with ``A0``, all other columns resampled."""
        A = self.Bm.copy()
        A[:, j] = self.A0[:, j]
        return A

    def Anotj(self, j: int) -> np.ndarray:
        """All columns shared with ``A0`` except column ``j``."""
        A = self.A0.copy()
        A[:, j] = self.Bm[:, j]
        return A

    @property
    def A_first(self) -> List[np.ndarray]:
        return [self.Aj(j) for j in range(self.p)]

    @property
    def A_total(self) -> List[np.ndarray]:
        return [self.Anotj(j) for j in range(self.p)]

    def stacked(self) -> np.ndarray:
        """``[A0; A_1..A_p; A_~1..A_~p]`` as one ``(2p + 1) s x p`` array."""
        return np.vstack([self.A0] + self.A_first + self.A_total)


def _uniform(rng, s, lower, upper):
    return lower + (upper - lower) * rng.random((s, lower.size))


def build_saltelli(p: int, s: int, seed: int = 0, lower=-1.0, upper=1.0,
                   min_s: int = 100) -> SaltelliMatrices:
    """Saltelli matrices for independent uniform inputs.

    ``A0`` and the resampled columns come from independent child streams of
    ``seed``.  The default distribution is ``Uniform(-1, 1)`` per input.
    """
    if s < min_s:
        raise SensitivityError(f"s must be at least {min_s}")
    if p < 1:
        raise SensitivityError("p must be positive")
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (p,)).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (p,)).copy()
    ra, rb = [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(2)]
    return SaltelliMatrices(_uniform(ra, s, lower, upper), _uniform(rb, s, lower, upper))


# ---------------------------------------------------------------------------
# moment accumulation and covariance decomposition


@dataclass
class CovDecomposition:
    """``Omega = Omega_j + Omega_{j,~j} + Omega_~j`` for every input ``j``.

    ``residual[j]`` compares ``Omega`` with the sum of the blocks when
    ``Omega_~j`` is replaced by its direct cross-covariance estimate, relative
    to ``||Omega||_F``.
    """

    omega: np.ndarray
    omega_j: np.ndarray
    omega_notj: np.ndarray
    omega_inter: np.ndarray
    residual: np.ndarray

    @property
    def p(self) -> int:
        return self.omega_j.shape[0]

    @property
    def m(self) -> int:
        return self.omega.shape[0]


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


class MomentAccumulator:
    """Streaming sums for the Saltelli covariance estimators."""

    def __init__(self, p: int, m: int):
        self.p, self.m, self.n = p, m, 0
        self.sum0 = np.zeros(m)
        self.sumj = np.zeros((p, m))
        self.sumnj = np.zeros((p, m))
        self.S00 = np.zeros((m, m))
        self.S0j = np.zeros((p, m, m))
        self.S0nj = np.zeros((p, m, m))
        self.Dj = np.zeros((p, m, m))
        self.Tj = np.zeros((p, m, m))

    def add(self, Y0, Yj, Ynotj) -> None:
        """Add one chunk: ``Y0`` is ``(s, m)``, ``Yj`` and ``Ynotj`` are ``(p, s, m)``."""
        Y0 = np.asarray(Y0, dtype=float)
        self.n += Y0.shape[0]
        self.sum0 += Y0.sum(axis=0)
        self.S00 += Y0.T @ Y0
        for j in range(self.p):
            a, b = Yj[j], Ynotj[j]
            d = Y0 - b
            self.sumj[j] += a.sum(axis=0)
            self.sumnj[j] += b.sum(axis=0)
            self.S0j[j] += Y0.T @ a
            self.S0nj[j] += Y0.T @ b
            self.Dj[j] += a.T @ d
            self.Tj[j] += d.T @ d

    def decomposition(self, estimator: str = "difference") -> CovDecomposition:
        if estimator not in ESTIMATORS:
            raise SensitivityError(f"unknown estimator {estimator!r}")
        n = self.n
        if n < 2:
            raise SensitivityError("need at least two samples")
        mu0 = self.sum0 / n
        muj = self.sumj / n
        munj = self.sumnj / n
        c00 = np.outer(mu0, mu0)
        omega = (self.S00 - n * c00) / (n - 1)
        direct_notj = _sym((self.S0nj - n * mu0[None, :, None] * munj[:, None, :]) / (n - 1))
        if estimator == "difference":
            om_j = _sym(self.Dj / n)
            om_t = _sym(self.Tj / (2.0 * n))
            om_nj = omega[None] - om_t
            inter = om_t - om_j
        elif estimator == "centered":
            om_j = _sym((self.S0j - n * mu0[None, :, None] * muj[:, None, :]) / (n - 1))
            om_nj = direct_notj
            inter = omega[None] - om_j - om_nj
        else:
            omega = self.S00 / n - c00
            om_j = _sym(self.S0j / n - c00[None])
            om_nj = _sym(self.S0nj / n - c00[None])
            inter = omega[None] - om_j - om_nj
        norm = np.linalg.norm(omega)
        resid = omega[None] - (om_j + inter + direct_notj)
        residual = np.linalg.norm(resid, axis=(1, 2)) / norm if norm > 0 else np.full(self.p, np.nan)
        return CovDecomposition(_sym(omega), om_j, om_nj, inter, residual)


def covariance_decomposition(Y0, Yj, Ynotj, estimator: str = "difference") -> CovDecomposition:
    """Decomposition from outputs on ``A0``, ``A_j`` and ``A_~j``."""
    Y0 = np.asarray(Y0, dtype=float)
    Y0 = Y0[:, None] if Y0.ndim == 1 else Y0
    Yj = np.asarray(Yj, dtype=float).reshape(-1, *Y0.shape)
    Ynotj = np.asarray(Ynotj, dtype=float).reshape(-1, *Y0.shape)
    acc = MomentAccumulator(Yj.shape[0], Y0.shape[1])
    acc.add(Y0, Yj, Ynotj)
    return acc.decomposition(estimator)


# ---------------------------------------------------------------------------
# indices


def univariate_indices(dec: CovDecomposition, min_var: float = 1e-12):
    """Per-output first-order and total indices, each ``(p, m)``.

    Outputs whose variance is below ``min_var`` are reported as NaN.
    """
    v = np.diag(dec.omega)
    vj = np.diagonal(dec.omega_j, axis1=1, axis2=2)
    vt = vj + np.diagonal(dec.omega_inter, axis1=1, axis2=2)
    ok = v > min_var
    with np.errstate(divide="ignore", invalid="ignore"):
        S = np.where(ok, vj / v, np.nan)
        ST = np.where(ok, vt / v, np.nan)
    return S, ST


def generalized_indices(dec: CovDecomposition):
    """Trace-based indices ``tr(Omega_j)/tr(Omega)`` and the total analogue."""
    tr = np.trace(dec.omega)
    if not tr > 0:
        raise SensitivityError("total variance trace is zero")
    tj = np.trace(dec.omega_j, axis1=1, axis2=2)
    ti = np.trace(dec.omega_inter, axis1=1, axis2=2)
    return tj / tr, (tj + ti) / tr


@dataclass
class ProjectionIndices:
    P: np.ndarray
    P_inter: np.ndarray
    P_total: np.ndarray
    cos_theta: np.ndarray


def projection_indices(dec: CovDecomposition, corr=None,
                       degenerate_tol: float = 1e-10) -> ProjectionIndices:
    """Vector-projection indices under the metric of an output correlation.

    With ``v`` the per-output variances (diagonal of ``Omega``) and ``v_j``
    the diagonal of ``Omega_j``, ``P_j = v_j^T R v / v^T R v``; the
    interaction index uses the diagonal of ``Omega_{j,~j}`` and
    ``P^T_j = P_j + P_{j,~j}``.  When ``v^T R v <= degenerate_tol * v^T v``
    the indices are undefined and returned as NaN with a warning.
    """
    m = dec.m
    R = np.eye(m) if corr is None else np.asarray(corr, dtype=float)
    if R.shape != (m, m):
        raise SensitivityError("correlation matrix shape does not match outputs")
    if not np.allclose(R, R.T, atol=1e-12) or np.linalg.eigvalsh(_sym(R)).min() < -1e-10:
        raise SensitivityError("output correlation matrix must be symmetric PSD")
    v = np.diag(dec.omega)
    vj = np.diagonal(dec.omega_j, axis1=1, axis2=2)
    vi = np.diagonal(dec.omega_inter, axis1=1, axis2=2)
    Rv = R @ v
    denom = float(v @ Rv)
    if not denom > degenerate_tol * float(v @ v):
        warnings.warn("total variance vector has (numerically) zero norm in the output "
                      "correlation metric; projection indices are undefined",
                      RuntimeWarning, stacklevel=2)
        nan = np.full(vj.shape[0], np.nan)
        return ProjectionIndices(nan, nan.copy(), nan.copy(), nan.copy())
    P = vj @ Rv / denom
    Pi = vi @ Rv / denom
    normj = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", vj, R, vj), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(normj > 0, (vj @ Rv) / (normj * np.sqrt(denom)), 0.0)
    return ProjectionIndices(P, Pi, P + Pi, cos)


def output_correlation_matrix(outputs):
    """Pearson correlation of the output columns, floored to PSD.

    Returns
    -------
    R : ndarray of shape (m, m)
    clipped : bool
        Whether negative eigenvalues were floored at zero.
    """
    Y = np.asarray(getattr(outputs, "values", outputs), dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 3:
        raise SensitivityError("need an n x m output matrix with n >= 3")
    sd = Y.std(axis=0)
    if np.any(~(sd > 0)):
        raise SensitivityError(f"constant output column {int(np.argmin(sd))}")
    R = np.atleast_2d(np.corrcoef(Y, rowvar=False))
    R = _sym(R)
    w, V = np.linalg.eigh(R)
    clipped = bool(w.min() < 0)
    if clipped:
        R = (V * np.clip(w, 0.0, None)) @ V.T
        d = np.sqrt(np.diag(R))
        R = R / np.outer(d, d)
    np.fill_diagonal(R, 1.0)
    return R, clipped


# ---------------------------------------------------------------------------
# posterior summaries


def _summary(x, axis=0):
    x = np.asarray(x, dtype=float)
    return {
        "mean": np.nanmean(x, axis=axis),
        "sd": np.nanstd(x, axis=axis, ddof=1) if x.shape[axis] > 1 else np.zeros(x.shape[1:]),
        "q025": np.nanquantile(x, 0.025, axis=axis),
        "q975": np.nanquantile(x, 0.975, axis=axis),
    }


@dataclass
class IndexPosterior:
    """Per-draw sensitivity indices and their posterior summaries.

    Arrays have a leading draw axis: ``S`` and ``ST`` are ``(k, p, m)``;
    trace-based and projection indices are ``(k, p)``.
    """

    S: np.ndarray
    ST: np.ndarray
    S_trace: np.ndarray
    ST_trace: np.ndarray
    P: np.ndarray
    P_inter: np.ndarray
    P_total: np.ndarray
    cos_theta: np.ndarray
    residual: np.ndarray
    names: List[str] = field(default_factory=list)
    output_names: List[str] = field(default_factory=list)
    estimator: str = "difference"

    @property
    def n_draws(self) -> int:
        return self.S.shape[0]

    def summary(self) -> dict:
        return {
            key: _summary(getattr(self, key))
            for key in ("S", "ST", "S_trace", "ST_trace", "P", "P_inter", "P_total")
        }

    def to_dict(self) -> dict:
        """JSON-ready summaries per index type and input."""
        out = {"estimator": self.estimator, "n_draws": self.n_draws,
               "inputs": list(self.names), "outputs": list(self.output_names)}
        for key, stats in self.summary().items():
            out[key] = {k: np.asarray(v).tolist() for k, v in stats.items()}
        out["residual_max"] = float(np.nanmax(self.residual)) if self.residual.size else 0.0
        return out


def _as_draws(Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        return Y[None, :, None]
    if Y.ndim == 2:
        return Y[None]
    return Y


def indices_from_outputs(Y0, Yj, Ynotj, estimator="difference", corr=None):
    """All index families from one draw's outputs."""
    dec = covariance_decomposition(Y0, Yj, Ynotj, estimator)
    S, ST = univariate_indices(dec)
    g, gt = generalized_indices(dec)
    proj = projection_indices(dec, corr)
    return dec, S, ST, g, gt, proj


def estimate_indices(
    predict,
    mats: SaltelliMatrices,
    estimator: str = "difference",
    corr=None,
    names: Optional[Sequence[str]] = None,
    output_names: Optional[Sequence[str]] = None,
) -> IndexPosterior:
    """Indices for each posterior draw of a predictor.

    Parameters
    ----------
    predict : callable or iterable of callables
        A callable maps an ``(N, p)`` array to ``(N,)``, ``(N, m)`` or
        ``(k, N, m)`` predictions (``k`` draws).  An iterable yields one
        single-draw callable per draw, which bounds memory.
    mats : SaltelliMatrices
    estimator : {"difference", "centered", "uncentered"}
    corr : ndarray, optional
        Output correlation for projection indices; identity by default.
    """
    s, p = mats.s, mats.p
    X = mats.stacked()
    fns = [predict] if callable(predict) else predict
    rows = {k: [] for k in ("S", "ST", "g", "gt", "P", "Pi", "PT", "cos", "res")}
    for fn in fns:
        Yall = _as_draws(fn(X))
        for Y in Yall:
            Y0 = Y[:s]
            Yj = Y[s:(p + 1) * s].reshape(p, s, -1)
            Ynj = Y[(p + 1) * s:].reshape(p, s, -1)
            dec, S, ST, g, gt, proj = indices_from_outputs(Y0, Yj, Ynj, estimator, corr)
            for key, val in zip(rows, (S, ST, g, gt, proj.P, proj.P_inter, proj.P_total,
                                       proj.cos_theta, dec.residual)):
                rows[key].append(val)
    if not rows["S"]:
        raise SensitivityError("no posterior draws to analyse")
    arr = {k: np.array(v) for k, v in rows.items()}
    m = arr["S"].shape[2]
    return IndexPosterior(
        arr["S"], arr["ST"], arr["g"], arr["gt"], arr["P"], arr["Pi"], arr["PT"],
        arr["cos"], arr["res"],
        list(names) if names is not None else [f"x{j + 1}" for j in range(p)],
        list(output_names) if output_names is not None else [f"y{i + 1}" for i in range(m)],
        estimator,
    )


# ---------------------------------------------------------------------------
# main effects


@dataclass
class MainEffectCurve:
    """Posterior main effect ``E(Y | x_j) - E(Y)`` on a grid, per output."""

    input: int
    grid: np.ndarray
    draws: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_rows(self, output: int = 0):
        return [(float(g), float(m), float(lo), float(hi)) for g, m, lo, hi in
                zip(self.grid, self.mean[:, output], self.lower[:, output], self.upper[:, output])]


def main_effects(
    predict,
    j: int,
    p: int,
    grid_size: int = 21,
    s: int = 1000,
    seed: int = 0,
    lower=-1.0,
    upper=1.0,
) -> MainEffectCurve:
    """Main effect of input ``j`` averaged over the other inputs.

    The same ``s`` samples of the remaining inputs are reused at every grid
    value, and the overall mean is the average over the whole grid-by-sample
    block, so the curve integrates to zero over a uniform grid.
    """
    if grid_size < 2:
        raise SensitivityError("grid_size must be at least 2")
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (p,))
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (p,))
    rng = np.random.default_rng(seed)
    base = lo + (hi - lo) * rng.random((s, p))
    grid = np.linspace(lo[j], hi[j], grid_size)
    X = np.repeat(base[None], grid_size, axis=0)
    X[:, :, j] = grid[:, None]
    X = X.reshape(-1, p)
    overall = lo + (hi - lo) * np.random.default_rng(seed + 1).random((s, p))
    fns = [predict] if callable(predict) else predict
    curves = []
    for fn in fns:
        Y = _as_draws(fn(np.vstack([X, overall])))
        for Yd in Y:
            cond = Yd[:grid_size * s].reshape(grid_size, s, -1).mean(axis=1)
            curves.append(cond - Yd[grid_size * s:].mean(axis=0))
    D = np.array(curves)
    return MainEffectCurve(j, grid, D, D.mean(axis=0),
                           np.quantile(D, 0.025, axis=0), np.quantile(D, 0.975, axis=0))


# ---------------------------------------------------------------------------
# emulator predictors


def select_draws(draws: Sequence[PosteriorDraw], max_draws: Optional[int]) -> List[PosteriorDraw]:
    """Evenly spaced subset of at most ``max_draws`` draws, in order."""
    draws = list(draws)
    if max_draws is None or len(draws) <= max_draws:
        return draws
    idx = np.unique(np.linspace(0, len(draws) - 1, max_draws).round().astype(int))
    return [draws[i] for i in idx]


def emulator_predictors(model: MsgpModel, draws: Sequence[PosteriorDraw],
                        max_draws: Optional[int] = 200) -> Iterable[Callable]:
    """One mean predictor ``H* B + r^T R^{-1}(Y - H B)`` per posterior draw.

    Factorizations are shared between consecutive draws with the same
    ``tau``.
    """
    chosen = select_draws(draws, max_draws)

    def gen():
        last_tau, factor = None, None
        for d in chosen:
            if last_tau is None or not np.array_equal(d.tau, last_tau):
                factor = d.factor or model.factor(d.tau)
                last_tau = d.tau
            alpha = residual_weights(model, d.B, factor)

            def fn(X, d=d, alpha=alpha):
                return predict_mean(model, X, d.tau, d.B, alpha)

            yield fn

    return gen()


@dataclass
class SensitivityResult:
    """Index posterior plus optional main-effect curves."""

    indices: IndexPosterior
    main_effects: List[MainEffectCurve] = field(default_factory=list)
    output_corr: Optional[np.ndarray] = None


def analyse(
    model: MsgpModel,
    draws: Sequence[PosteriorDraw],
    s: int = 5000,
    seed: int = 0,
    estimator: str = "difference",
    max_draws: Optional[int] = 200,
    corr=None,
    main_effect_grid: int = 0,
    main_effect_samples: int = 500,
    main_effect_draws: int = 50,
) -> SensitivityResult:
    """Full sensitivity analysis of a fitted emulator on scaled inputs.

    ``corr`` defaults to the output correlation of the training data.
    Main-effect curves are computed when ``main_effect_grid >= 2``.
    """
    mats = build_saltelli(model.p, s, seed)
    if corr is None:
        corr = output_correlation_matrix(model.Y)[0] if model.m > 1 else np.eye(1)
    names = model.design.names if model.design is not None else None
    idx = estimate_indices(emulator_predictors(model, draws, max_draws), mats, estimator,
                           corr, names, model.outputs.names)
    curves = []
    if main_effect_grid >= 2:
        for j in range(model.p):
            curves.append(main_effects(emulator_predictors(model, draws, main_effect_draws),
                                       j, model.p, main_effect_grid, main_effect_samples,
                                       seed + 1000 + j))
    return SensitivityResult(idx, curves, corr)


# ---------------------------------------------------------------------------
# brute-force oracle on a known function


def saltelli_oracle(
    f: Callable,
    p: int,
    s: int,
    seed: int = 0,
    lower=-1.0,
    upper=1.0,
    estimator: str = "difference",
    corr=None,
    chunk: int = 50_000,
):
    """Indices of ``f`` from a streamed Saltelli run without an emulator.

    ``f`` maps ``(N, p)`` inputs to ``(N,)`` or ``(N, m)`` outputs.  Samples
    are drawn in chunks so ``s`` may be large.

    Returns
    -------
    dec : CovDecomposition
    indices : dict
        ``S``, ``ST`` (per output), ``S_trace``, ``ST_trace``, ``P``,
        ``P_inter``, ``P_total``.
    """
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (p,))
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (p,))
    ra, rb = [np.random.default_rng(c) for c in np.random.SeedSequence(seed).spawn(2)]
    acc = None
    done = 0
    while done < s:
        k = min(chunk, s - done)
        A0 = lo + (hi - lo) * ra.random((k, p))
        Bm = lo + (hi - lo) * rb.random((k, p))
        mats = SaltelliMatrices(A0, Bm)
        Y0 = np.asarray(f(A0), dtype=float).reshape(k, -1)
        Yj = np.stack([np.asarray(f(mats.Aj(j)), dtype=float).reshape(k, -1) for j in range(p)])
        Ynj = np.stack([np.asarray(f(mats.Anotj(j)), dtype=float).reshape(k, -1)
                        for j in range(p)])
        if acc is None:
            acc = MomentAccumulator(p, Y0.shape[1])
        acc.add(Y0, Yj, Ynj)
        done += k
    dec = acc.decomposition(estimator)
    S, ST = univariate_indices(dec)
    g, gt = generalized_indices(dec)
    proj = projection_indices(dec, corr)
    return dec, {"S": S, "ST": ST, "S_trace": g, "ST_trace": gt, "P": proj.P,
                 "P_inter": proj.P_inter, "P_total": proj.P_total}
