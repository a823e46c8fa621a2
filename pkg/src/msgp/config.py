"""Run configuration shared by the command-line stages."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional

import numpy as np

from .emulator import EmulatorError, MniwPrior
from .kernels import KernelError, KernelSpec
from .mcmc import McmcConfig, McmcError


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _check_keys(d: dict, cls, where: str) -> None:
    unknown = set(d) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class PriorConfig:
    """MNIW hyperparameters.

    Scalars are expanded to ``B0 = b0 * 1``, ``Lambda0 = lambda0 * I``,
    ``S0 = s0 * I``; full matrices may be given instead.  ``delta0``
    defaults to ``m + 2``.
    """

    B0: object = 0.0
    Lambda0: object = 1e-4
    S0: object = 1.0
    delta0: Optional[float] = None
    tau_prior: str = "uniform"

    def build(self, q: int, m: int) -> MniwPrior:
        def expand(v, shape, eye):
            a = np.asarray(v, dtype=float)
            if a.ndim == 0:
                return float(a) * (np.eye(shape[0]) if eye else np.ones(shape))
            return a

        delta0 = m + 2.0 if self.delta0 is None else float(self.delta0)
        try:
            return MniwPrior(expand(self.B0, (q, m), False), expand(self.Lambda0, (q, q), True),
                             expand(self.S0, (m, m), True), delta0, self.tau_prior)
        except EmulatorError as err:
            raise ConfigError(f"prior: {err}") from None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = np.asarray(v).tolist() if isinstance(v, (list, np.ndarray)) else v
        return out


@dataclass
class SaConfig:
    """Sensitivity-analysis settings."""

    s: int = 5000
    max_draws: Optional[int] = 200
    estimator: str = "difference"
    main_effect_grid: int = 0
    main_effect_samples: int = 500
    main_effect_draws: int = 50

    def __post_init__(self):
        if self.s < 100:
            raise ConfigError("sa.s must be at least 100")
        if self.estimator not in ("difference", "centered", "uncentered"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")


@dataclass
class CvConfig:
    """Cross-validation settings."""

    folds: int = 5
    omegas: List[float] = field(default_factory=lambda: [0.8, 0.9, 0.95, 0.99])
    iterations: int = 400
    burn_in: int = 200
    thin: int = 10
    extra_kernels: List[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("cv.folds must be at least 2")
        if any(not 0 < w < 1 for w in self.omegas):
            raise ConfigError("cv.omegas must lie in (0, 1)")


@dataclass
class RunConfig:
    """Everything a fit, validation or sensitivity run depends on."""

    kernel: KernelSpec = field(default_factory=KernelSpec)
    prior: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    basis: str = "linear"
    ordering: str = "mindegree"
    standardize: bool = True
    seed: int = 0
    workers: int = 1
    sa: SaConfig = field(default_factory=SaConfig)
    cv: CvConfig = field(default_factory=CvConfig)

    def __post_init__(self):
        if self.basis not in ("constant", "linear"):
            raise ConfigError(f"unknown basis {self.basis!r}")
        if self.ordering not in ("mindegree", "rcm", "natural"):
            raise ConfigError(f"unknown ordering {self.ordering!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Parse a config mapping; unknown keys at any level are rejected.

        Top-level ``omega`` and ``nugget`` are accepted as shorthands for the
        kernel fields of the same name.
        """
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        d = dict(d)
        kernel = dict(d.pop("kernel", {}) or {})
        for key in ("omega", "nugget"):
            if key in d:
                kernel[key] = d.pop(key)
        _check_keys(d, cls, "run-config")
        try:
            out = {"kernel": KernelSpec.from_dict(kernel)}
            out["mcmc"] = McmcConfig.from_dict(d.pop("mcmc", {}) or {})
        except (KernelError, McmcError, TypeError) as err:
            raise ConfigError(str(err)) from None
        for key, sub in (("prior", PriorConfig), ("sa", SaConfig), ("cv", CvConfig)):
            part = d.pop(key, {}) or {}
            if not isinstance(part, dict):
                raise ConfigError(f"{key} must be an object")
            _check_keys(part, sub, key)
            out[key] = sub(**part)
        out.update(d)
        try:
            return cls(**out)
        except TypeError as err:
            raise ConfigError(str(err)) from None

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "prior": self.prior.to_dict(),
            "mcmc": self.mcmc.to_dict(),
            "basis": self.basis,
            "ordering": self.ordering,
            "standardize": self.standardize,
            "seed": self.seed,
            "workers": self.workers,
            "sa": {f.name: getattr(self.sa, f.name) for f in fields(self.sa)},
            "cv": {f.name: getattr(self.cv, f.name) for f in fields(self.cv)},
        }

    def digest(self) -> str:
        return config_digest(self.to_dict())

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(d: dict) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def load_config(path) -> RunConfig:
    """Read a JSON run config; raises ``FileNotFoundError`` or :class:`ConfigError`."""
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None
    return RunConfig.from_dict(d)
