"""K-fold cross-validation over sparsity levels and output aggregation."""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .design import DesignError, OutputMatrix
from .emulator import MniwPrior, MsgpModel, build_basis, predict_matrix_t
from .kernels import KernelSpec
from .mcmc import McmcConfig, run_chain
from .sensitivity import select_draws


class ValidationError(ValueError):
    """Invalid cross-validation request."""


def fold_indices(n: int, K: int, seed: int = 0) -> np.ndarray:
    """Random fold label in ``0..K-1`` for each of ``n`` rows, sizes within one."""
    if K < 2:
        raise ValidationError("K must be at least 2")
    if n < 2 * K:
        raise ValidationError(f"need n >= 2K rows, got n={n}, K={K}")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    for k, idx in enumerate(np.array_split(perm, K)):
        labels[idx] = k
    return labels


def fold_metrics(y, pred, train_mean):
    """Per-output ``SSE``, ``SST`` and count for one held-out fold.

    ``SST`` is taken about the training-fold mean, so predicting that mean
    gives ``P = 0``.
    """
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    sse = np.sum((y - pred) ** 2, axis=0)
    sst = np.sum((y - np.asarray(train_mean)) ** 2, axis=0)
    return sse, sst, y.shape[0]


def _p_rho(sse, sst, count):
    with np.errstate(divide="ignore", invalid="ignore"):
        P = np.where(sst > 0, 1.0 - sse / sst, np.nan)
    return P, np.sqrt(sse / count)


@dataclass
class CvLevel:
    """Cross-validation results for one kernel and sparsity level."""

    omega: float
    kernel: str
    P: np.ndarray
    rho: np.ndarray
    fold_P: np.ndarray
    fold_rho: np.ndarray
    fit_time: float
    fold_times: np.ndarray
    predictions: np.ndarray = field(repr=False)
    zero_fraction: float = float("nan")


@dataclass
class CvReport:
    """Cross-validated ``P`` and ``rho`` per output, fold and sparsity level.

    ``Y`` holds the standardized outputs the metrics refer to and
    ``predictions`` of each level the held-out predictions on that scale,
    so every metric can be recomputed from persisted data.
    """

    folds: np.ndarray
    Y: np.ndarray
    levels: List[CvLevel]
    output_names: List[str]

    def recompute(self, level: int = 0):
        """``(P, rho, fold_P, fold_rho)`` from the stored predictions."""
        return _level_metrics(self.Y, self.levels[level].predictions, self.folds)

    def table(self) -> List[dict]:
        """One row per level: mean and per-output ``P`` and ``rho``, fit time."""
        rows = []
        for lv in self.levels:
            row = {"kernel": lv.kernel, "omega": lv.omega,
                   "P_mean": float(np.nanmean(lv.P)), "rho_mean": float(np.mean(lv.rho)),
                   "fit_time": lv.fit_time, "zero_fraction": lv.zero_fraction}
            for i, name in enumerate(self.output_names):
                row[f"P_{name}"] = float(lv.P[i])
                row[f"rho_{name}"] = float(lv.rho[i])
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "folds": self.folds.tolist(),
            "output_names": list(self.output_names),
            "table": self.table(),
            "levels": [
                {"omega": lv.omega, "kernel": lv.kernel, "P": lv.P.tolist(),
                 "rho": lv.rho.tolist(), "fold_P": lv.fold_P.tolist(),
                 "fold_rho": lv.fold_rho.tolist(), "fit_time": lv.fit_time,
                 "fold_times": lv.fold_times.tolist(), "zero_fraction": lv.zero_fraction}
                for lv in self.levels
            ],
        }


def _level_metrics(Y, pred, folds):
    K = int(folds.max()) + 1
    m = Y.shape[1]
    sse, sst, cnt = np.zeros(m), np.zeros(m), 0
    fP, frho = np.empty((K, m)), np.empty((K, m))
    for k in range(K):
        te = folds == k
        a, b, c = fold_metrics(Y[te], pred[te], Y[~te].mean(axis=0))
        fP[k], frho[k] = _p_rho(a, b, c)
        sse += a
        sst += b
        cnt += c
    P, rho = _p_rho(sse, sst, cnt)
    return P, rho, fP, frho


def fit_and_predict(model: MsgpModel, Xtest, mcmc: McmcConfig, seed: int,
                    max_draws: int = 20) -> np.ndarray:
    """Posterior predictive mean: matrix-t locations averaged over ``tau`` draws."""
    if mcmc.fixed_tau is not None:
        taus = [np.asarray(mcmc.fixed_tau, dtype=float)]
    else:
        res = run_chain(model, mcmc, seed)
        chosen = select_draws(res.draws, max_draws)
        if not chosen:
            raise ValidationError("MCMC stored no draws; increase iterations")
        taus = [d.tau for d in chosen]
    out = np.zeros((Xtest.shape[0], model.m))
    last, loc = None, None
    for tau in taus:
        if last is None or not np.array_equal(tau, last):
            loc = predict_matrix_t(model, tau, Xtest, full_cov=False).location
            last = tau
        out += loc
    return out / len(taus)


def _run_fold(args):
    X, Y, labels, k, kernel, basis, prior, mcmc, seed, max_draws = args
    tr = labels != k
    Xtr, Ytr = X[tr], Y[tr]
    H = build_basis(Xtr, basis)
    if Xtr.shape[0] <= H.shape[1] or np.linalg.matrix_rank(H) < H.shape[1]:
        raise ValidationError(f"fold {k} is too small for the {basis} basis")
    t0 = time.perf_counter()
    model = MsgpModel(Xtr, Ytr, kernel, basis, prior)
    pred = fit_and_predict(model, X[~tr], mcmc, seed, max_draws)
    elapsed = time.perf_counter() - t0
    zf = float("nan")
    if kernel.compact:
        n = Xtr.shape[0]
        zf = 1.0 - 2.0 * model.pairs.size / (n * (n - 1))
    return k, pred, elapsed, zf


def cross_validate(
    X,
    Y,
    kernel: Optional[KernelSpec] = None,
    omegas: Sequence[float] = (0.8, 0.9, 0.95, 0.99),
    K: int = 5,
    basis: str = "linear",
    prior: Optional[MniwPrior] = None,
    mcmc: Optional[McmcConfig] = None,
    seed: int = 0,
    kernels: Optional[Sequence[KernelSpec]] = None,
    workers: int = 1,
    max_draws: int = 20,
) -> CvReport:
    """K-fold cross-validation of the emulator at several sparsity levels.

    Outputs are standardized once on the full data; each fold is fit by a
    short MCMC run and predicted with the matrix-t mean.  ``P = 1 - SSE/SST``
    and ``rho`` is the RMSE, both per output on the standardized scale.

    Parameters
    ----------
    X : ndarray of shape (n, p)
        Scaled inputs.
    Y : ndarray or OutputMatrix of shape (n, m)
    kernel : KernelSpec
        Base kernel; its ``omega`` is replaced by each entry of ``omegas``.
    kernels : sequence of KernelSpec, optional
        Extra kernels evaluated at each ``omega`` as well.
    mcmc : McmcConfig
        Per-fold sampler settings; a single short chain by default.
    workers : int
        Folds run as independent processes when above 1.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    Yv = Y.values if isinstance(Y, OutputMatrix) else np.asarray(Y, dtype=float)
    Yv = Yv[:, None] if Yv.ndim == 1 else Yv
    names = Y.names if isinstance(Y, OutputMatrix) and Y.names else [
        f"y{i + 1}" for i in range(Yv.shape[1])]
    sd = Yv.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise DesignError("constant output column cannot be cross-validated")
    Ys = (Yv - Yv.mean(axis=0)) / sd
    labels = fold_indices(X.shape[0], K, seed)
    mcmc = mcmc or McmcConfig(iterations=400, burn_in=200, thin=10, chains=1)
    base = [kernel or KernelSpec()] + list(kernels or [])
    levels = []
    for spec in base:
        for omega in omegas:
            ks = replace(spec, omega=float(omega), cutoff=None)
            jobs = [(X, Ys, labels, k, ks, basis, prior, mcmc, seed + 7919 * (k + 1), max_draws)
                    for k in range(K)]
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as ex:
                    results = list(ex.map(_run_fold, jobs))
            else:
                results = [_run_fold(j) for j in jobs]
            pred = np.empty_like(Ys)
            times = np.zeros(K)
            zfs = []
            for k, pk, el, zf in results:
                pred[labels == k] = pk
                times[k] = el
                zfs.append(zf)
            P, rho, fP, frho = _level_metrics(Ys, pred, labels)
            levels.append(CvLevel(float(omega), spec.family, P, rho, fP, frho,
                                  float(times.sum()), times, pred, float(np.mean(zfs))))
    return CvReport(labels, Ys, levels, list(names))


def aggregate_outputs(outputs, groups: Dict[str, Sequence]) -> OutputMatrix:
    """Group-wise row means of output columns, one column per group.

    Parameters
    ----------
    outputs : OutputMatrix or ndarray of shape (n, m)
    groups : dict
        Maps each group name to the column names (or integer indices) it
        averages.  Every column must belong to exactly one group.
    """
    if isinstance(outputs, OutputMatrix):
        Y, names = outputs.values, list(outputs.names or [])
    else:
        Y, names = np.asarray(outputs, dtype=float), []
    Y = Y[:, None] if Y.ndim == 1 else Y
    names = names or [f"y{i + 1}" for i in range(Y.shape[1])]
    lookup = {nm: i for i, nm in enumerate(names)}
    seen = np.zeros(Y.shape[1], dtype=int)
    cols = []
    for g, members in groups.items():
        if len(members) == 0:
            raise ValidationError(f"group {g!r} is empty")
        idx = [lookup[c] if isinstance(c, str) else int(c) for c in members]
        seen[idx] += 1
        cols.append(Y[:, idx].mean(axis=1))
    if np.any(seen != 1):
        missing = [names[i] for i in np.flatnonzero(seen != 1)]
        raise ValidationError(f"columns not mapped to exactly one group: {missing}")
    return OutputMatrix(np.column_stack(cols), names=list(groups))
