"""Multivariate sparse Gaussian-process emulation and Bayesian sensitivity analysis."""

from ._backend import COMPILED
from ._backend import NAME as BACKEND
from .archive import FittedModel, load_archive, save_archive
from .config import RunConfig
from .design import (
    DesignMatrix,
    OutputMatrix,
    VariableSpec,
    lhs_sample,
    mixed_design,
    scale_inputs,
    standardize_outputs,
    unscale_inputs,
)
from .emulator import (
    MniwPrior,
    MsgpModel,
    PosteriorDraw,
    PredictiveDistribution,
    build_basis,
    predict_matrix_normal,
    predict_matrix_t,
    predict_posterior,
)
from .kernels import KernelSpec, assemble_sparse_correlation, calibrate_cutoff
from .mcmc import McmcConfig, compute_psrf, psrf, ram_step, run_chain, run_parallel_chains
from .sensitivity import analyse, build_saltelli, estimate_indices, saltelli_oracle
from .sparse import CholeskyFactor, NotPositiveDefinite, SparseCorrelation, factorize
from .testfns import arctan_temporal, get_test_function, sobol_g, sobol_g_oracle
from .validation import CvReport, aggregate_outputs, cross_validate

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "COMPILED", "CholeskyFactor", "CvReport", "DesignMatrix", "FittedModel",
    "KernelSpec", "McmcConfig", "MniwPrior", "MsgpModel", "NotPositiveDefinite",
    "OutputMatrix", "PosteriorDraw", "PredictiveDistribution", "RunConfig",
    "SparseCorrelation", "VariableSpec", "aggregate_outputs", "analyse",
    "arctan_temporal", "assemble_sparse_correlation", "build_basis", "build_saltelli",
    "calibrate_cutoff", "compute_psrf", "cross_validate", "estimate_indices", "factorize",
    "get_test_function", "lhs_sample", "load_archive", "mixed_design",
    "predict_matrix_normal", "predict_matrix_t", "predict_posterior", "psrf", "ram_step",
    "run_chain", "run_parallel_chains", "saltelli_oracle", "save_archive", "scale_inputs",
    "sobol_g", "sobol_g_oracle", "standardize_outputs", "unscale_inputs",
]
