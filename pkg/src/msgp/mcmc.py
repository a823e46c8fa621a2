"""Robust adaptive Metropolis-within-Gibbs sampling and PSRF diagnostics.

The cut-off vector ``tau`` lives on the simplex ``{tau_k > 0, sum(tau) < c}``
and is sampled in an unconstrained space through a stick-breaking map, with
the log-Jacobian added to the target.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import expit, log_expit

from .emulator import (
    ConditionalPosterior,
    EmulatorError,
    MsgpModel,
    PosteriorDraw,
    draw_parameters,
)
from .sparse import NotPositiveDefinite


class McmcError(ValueError):
    """Invalid sampler configuration or inputs."""


# ---------------------------------------------------------------------------
# simplex map


def simplex_from_unconstrained(z, c: float):
    """Map ``z`` in ``R^p`` to ``tau`` on the scaled simplex.

    Returns ``(tau, log_jacobian)``.  ``z = 0`` maps to the centroid
    ``tau_k = c / (p + 1)``.
    """
    z = np.asarray(z, dtype=float)
    p = z.size
    K = p + 1
    shift = np.log(K - np.arange(1, p + 1))
    x = z - shift
    v = expit(x)
    log_v = log_expit(x)
    log_1mv = log_expit(-x)
    log_rem = np.concatenate([[0.0], np.cumsum(log_1mv)[:-1]])
    tau = c * np.exp(log_v + log_rem)
    logj = p * np.log(c) + np.sum(log_v + log_1mv + log_rem)
    return tau, float(logj)


def unconstrained_from_simplex(tau, c: float) -> np.ndarray:
    """Inverse of :func:`simplex_from_unconstrained`."""
    w = np.asarray(tau, dtype=float) / c
    p = w.size
    if np.any(w <= 0) or w.sum() >= 1:
        raise McmcError("tau must lie strictly inside the simplex")
    rem = 1.0 - np.concatenate([[0.0], np.cumsum(w)[:-1]])
    v = w / rem
    return np.log(v) - np.log1p(-v) + np.log(p + 1 - np.arange(1, p + 1))


# ---------------------------------------------------------------------------
# robust adaptive Metropolis


def chol_rank_one(L, x, sign: float = 1.0) -> bool:
    """In-place update ``L L^T + sign * x x^T``; returns False on breakdown."""
    x = np.array(x, dtype=float)
    n = x.size
    for k in range(n):
        r2 = L[k, k] ** 2 + sign * x[k] ** 2
        if not r2 > 0:
            return False
        r = np.sqrt(r2)
        cval = r / L[k, k]
        s = x[k] / L[k, k]
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] + sign * s * x[k + 1:]) / cval
            x[k + 1:] = cval * x[k + 1:] - s * L[k + 1:, k]
    return bool(np.all(np.diag(L) > 0))


@dataclass
class RamState:
    """Position, adaptation factor and bookkeeping of the RAM sampler."""

    x: np.ndarray
    chol: np.ndarray
    logp: float
    step: int = 0
    target_accept: float = 0.234
    gamma: float = 2.0 / 3.0
    adapt: bool = True
    adapt_scale: Optional[float] = None
    payload: object = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.target_accept < 1:
            raise McmcError("target acceptance must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise McmcError("gamma must lie in (0, 1]")


def _evaluate(log_target, x):
    out = log_target(x)
    if isinstance(out, tuple):
        return float(out[0]), out[1]
    return float(out), None


def ram_step(state: RamState, log_target: Callable, rng):
    """One robust adaptive Metropolis step.

    The adaptation weight is ``min(1, kappa * j^(-gamma))`` with ``kappa``
    equal to ``adapt_scale`` or, by default, the dimension.  ``log_target``
    returns a log density or a ``(log density, payload)`` tuple; the payload
    of the current point is kept on the state.

    Returns
    -------
    (RamState, bool)
        Updated state and whether the proposal was accepted.
    """
    d = state.x.size
    u = rng.standard_normal(d)
    su = state.chol @ u
    prop = state.x + su
    lp, payload = _evaluate(log_target, prop)
    if np.isfinite(lp):
        alpha = float(np.exp(min(0.0, lp - state.logp)))
    else:
        alpha = 0.0
    accepted = bool(rng.random() < alpha)
    step = state.step + 1
    chol = state.chol
    if state.adapt:
        chol = chol.copy()
        kappa = d if state.adapt_scale is None else state.adapt_scale
        eta = min(1.0, kappa * step ** (-state.gamma))
        a = eta * (alpha - state.target_accept)
        norm2 = float(u @ u)
        if norm2 > 0 and a != 0:
            v = su * np.sqrt(abs(a) / norm2)
            work = chol.copy()
            if chol_rank_one(work, v, 1.0 if a > 0 else -1.0):
                chol = work
            else:
                M = chol @ chol.T + np.sign(a) * np.outer(v, v)
                try:
                    chol = np.linalg.cholesky(0.5 * (M + M.T))
                except np.linalg.LinAlgError:
                    pass
    if accepted:
        new = replace(state, x=prop, logp=lp, step=step, chol=chol, payload=payload)
    else:
        new = replace(state, step=step, chol=chol)
    return new, accepted


# ---------------------------------------------------------------------------
# chains


@dataclass
class McmcConfig:
    """Sampler settings.

    ``iterations`` counts all iterations including burn-in; draws are stored
    at iterations ``burn_in + thin, burn_in + 2 thin, ...``.
    """

    iterations: int = 10_000
    burn_in: int = 1_000
    thin: int = 10
    chains: int = 3
    target_accept: float = 0.234
    gamma: float = 2.0 / 3.0
    seeds: Optional[List[int]] = None
    init_scale: float = 0.1
    init_jitter: float = 0.0
    adapt: bool = True
    adapt_scale: Optional[float] = None
    fixed_tau: Optional[List[float]] = None
    init_tau: Optional[List[float]] = None

    def __post_init__(self):
        if self.iterations < 0 or self.burn_in < 0 or self.thin < 1:
            raise McmcError("iterations, burn_in must be >= 0 and thin >= 1")
        if self.chains < 1:
            raise McmcError("chains must be >= 1")
        if not 0 < self.target_accept < 1:
            raise McmcError("target_accept must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise McmcError("gamma must lie in (0, 1]")
        if self.seeds is not None:
            self.seeds = [int(s) for s in self.seeds]

    @property
    def n_stored(self) -> int:
        return max(self.iterations - self.burn_in, 0) // self.thin

    def resolved_seeds(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(1, self.chains + 1))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "McmcConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise McmcError(f"unknown mcmc keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ChainResult:
    """Thinned draws of one chain."""

    draws: List[PosteriorDraw]
    accept_rate: float
    seed: int
    chain: int = 0
    final_chol: Optional[np.ndarray] = None
    log_post: Optional[np.ndarray] = None


def _tau_target(model: MsgpModel):
    c = model.cutoff

    def log_target(z):
        tau, logj = simplex_from_unconstrained(z, c)
        if not np.all(tau > 0):
            return -np.inf, None
        try:
            post = model.posterior(tau)
        except (NotPositiveDefinite, EmulatorError, np.linalg.LinAlgError):
            return -np.inf, None
        return post.log_marginal + logj, post

    return log_target


def run_chain(model: MsgpModel, config: McmcConfig, seed: int, chain: int = 0) -> ChainResult:
    """Run one Metropolis-within-Gibbs chain.

    Each iteration makes one RAM step on ``tau`` under its marginal posterior
    and, at stored iterations, an exact conjugate draw of ``(Sigma, B)``
    given the current ``tau``.  ``B`` and ``Sigma`` do not enter the ``tau``
    update, so drawing them only where they are stored leaves the chain's
    distribution unchanged.
    """
    ss = np.random.SeedSequence(seed)
    rng_tau, rng_gibbs, rng_init = [np.random.default_rng(s) for s in ss.spawn(3)]
    draws: List[PosteriorDraw] = []
    if config.fixed_tau is not None:
        tau = np.asarray(config.fixed_tau, dtype=float)
        if not model.in_simplex(tau):
            raise McmcError("fixed_tau lies outside the simplex")
        post = model.posterior(tau)
        for j in range(1, config.iterations + 1):
            if j > config.burn_in and (j - config.burn_in) % config.thin == 0:
                B, Sigma = draw_parameters(post, rng_gibbs)
                draws.append(PosteriorDraw(B, Sigma, tau.copy(), chain, j))
        return ChainResult(draws, 1.0, seed, chain)

    log_target = _tau_target(model)
    d = model.p
    if config.init_tau is not None:
        z0 = unconstrained_from_simplex(config.init_tau, model.cutoff)
    else:
        z0 = np.zeros(d)
    if config.init_jitter > 0:
        z0 = z0 + config.init_jitter * rng_init.standard_normal(d)
    lp0, post0 = _evaluate(log_target, z0)
    if not np.isfinite(lp0):
        raise McmcError("log target is not finite at the initial tau")
    state = RamState(z0, config.init_scale * np.eye(d), lp0, 0, config.target_accept,
                     config.gamma, config.adapt, config.adapt_scale, post0)
    accepted = 0
    trace = np.empty(config.iterations)
    for j in range(1, config.iterations + 1):
        state, acc = ram_step(state, log_target, rng_tau)
        accepted += acc
        trace[j - 1] = state.logp
        if j > config.burn_in and (j - config.burn_in) % config.thin == 0:
            post: ConditionalPosterior = state.payload
            B, Sigma = draw_parameters(post, rng_gibbs)
            draws.append(PosteriorDraw(B, Sigma, post.tau.copy(), chain, j))
    rate = accepted / config.iterations if config.iterations else 0.0
    if config.iterations and rate < 0.01:
        warnings.warn(f"chain {chain} (seed {seed}) accepted only {rate:.4f} of proposals",
                      RuntimeWarning, stacklevel=2)
    return ChainResult(draws, rate, seed, chain, state.chol, trace)


def _run_one(args):
    model, config, seed, chain = args
    return run_chain(model, config, seed, chain)


def run_parallel_chains(
    model: MsgpModel,
    config: McmcConfig,
    chains: Optional[int] = None,
    seeds: Optional[Sequence[int]] = None,
    mode: str = "process",
    workers: Optional[int] = None,
) -> List[ChainResult]:
    """Run independent chains, concurrently when workers are available.

    Results are identical to running the chains sequentially with the same
    seeds.  ``mode`` is ``"process"``, ``"thread"`` or ``"sequential"``.
    """
    chains = config.chains if chains is None else chains
    seeds = list(config.resolved_seeds() if seeds is None else seeds)
    if chains < 1:
        raise McmcError("chains must be >= 1")
    if len(seeds) < chains:
        raise McmcError(f"need {chains} seeds, got {len(seeds)}")
    seeds = seeds[:chains]
    if len(set(seeds)) != len(seeds):
        raise McmcError("duplicate seeds across chains")
    jobs = [(model, config, s, k) for k, s in enumerate(seeds)]
    workers = workers or min(chains, os.cpu_count() or 1)
    if mode == "sequential" or workers <= 1 or chains == 1:
        return [_run_one(j) for j in jobs]
    if mode == "thread":
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_one, jobs))
    if mode == "process":
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_one, jobs))
    raise McmcError(f"unknown execution mode {mode!r}")


# ---------------------------------------------------------------------------
# diagnostics


def parameter_names(draw: PosteriorDraw) -> List[str]:
    q, m = draw.B.shape
    names = [f"tau[{k}]" for k in range(draw.tau.size)]
    names += [f"B[{i},{j}]" for i in range(q) for j in range(m)]
    names += [f"Sigma[{i},{j}]" for i in range(m) for j in range(i, m)]
    return names


def draws_matrix(draws: Sequence[PosteriorDraw]) -> np.ndarray:
    """Stack draws into an ``(n_draws, n_params)`` array."""
    rows = []
    for d in draws:
        iu = np.triu_indices(d.Sigma.shape[0])
        rows.append(np.concatenate([d.tau, d.B.ravel(), d.Sigma[iu]]))
    return np.array(rows)


@dataclass
class PsrfReport:
    """Per-parameter potential scale reduction factors."""

    names: List[str]
    point: np.ndarray
    upper: np.ndarray

    def fraction_below(self, threshold: float = 1.1) -> float:
        ok = np.isfinite(self.point)
        return float(np.mean(self.point[ok] < threshold)) if ok.any() else float("nan")

    def to_rows(self):
        return [(n, float(p), float(u)) for n, p, u in zip(self.names, self.point, self.upper)]


def psrf(samples, confidence: float = 0.95):
    """Gelman-Rubin PSRF for an array of shape ``(chains, n, params)``.

    Follows the standard formulation with the degrees-of-freedom correction
    and an F-distribution upper confidence limit.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    M, n, _ = x.shape
    if M < 2:
        raise McmcError("PSRF needs at least two chains")
    if n < 2:
        raise McmcError("PSRF needs at least two draws per chain")
    s2 = x.var(axis=1, ddof=1)
    xbar = x.mean(axis=1)
    w = s2.mean(axis=0)
    b = n * xbar.var(axis=0, ddof=1)
    muhat = xbar.mean(axis=0)
    var_w = s2.var(axis=0, ddof=1) / M
    var_b = 2.0 * b**2 / (M - 1)

    def _cov(a, c):
        return np.sum((a - a.mean(0)) * (c - c.mean(0)), axis=0) / (M - 1)

    cov_wb = (n / M) * (_cov(s2, xbar**2) - 2.0 * muhat * _cov(s2, xbar))
    V = (n - 1) * w / n + (1 + 1.0 / M) * b / n
    var_V = ((n - 1) ** 2 * var_w + (1 + 1.0 / M) ** 2 * var_b
             + 2 * (n - 1) * (1 + 1.0 / M) * cov_wb) / n**2
    with np.errstate(divide="ignore", invalid="ignore"):
        df_V = np.where(var_V > 0, 2.0 * V**2 / var_V, np.inf)
        df_adj = np.where(np.isfinite(df_V), (df_V + 3.0) / (df_V + 1.0), 1.0)
        W_df = np.where(var_w > 0, 2.0 * w**2 / var_w, np.inf)
        r_fixed = (n - 1) / n
        r_random = (1 + 1.0 / M) * (1.0 / n) * (b / w)
        r_est = r_fixed + r_random
        qf = np.where(np.isfinite(W_df),
                      stats.f.ppf((1 + confidence) / 2, M - 1, np.where(np.isfinite(W_df), W_df, 1.0)),
                      stats.chi2.ppf((1 + confidence) / 2, M - 1) / (M - 1))
        r_up = r_fixed + qf * r_random
        point = np.sqrt(df_adj * r_est)
        upper = np.sqrt(df_adj * r_up)
    bad = ~(w > 0)
    point[bad] = np.nan
    upper[bad] = np.nan
    return point, upper


def compute_psrf(chains: Sequence[ChainResult], confidence: float = 0.95) -> PsrfReport:
    """PSRF for every scalar parameter in ``{tau, B, Sigma}``."""
    if len(chains) < 2:
        raise McmcError("PSRF needs at least two chains")
    lengths = {len(c.draws) for c in chains}
    if len(lengths) != 1:
        raise McmcError(f"chains have unequal lengths: {sorted(lengths)}")
    n = lengths.pop()
    if n < 10:
        raise McmcError("PSRF needs at least 10 draws per chain")
    arr = np.stack([draws_matrix(c.draws) for c in chains])
    point, upper = psrf(arr, confidence)
    return PsrfReport(parameter_names(chains[0].draws[0]), point, upper)
