"""Fitted-model archive in JSON-lines form.

Layout
------
Line 1 is a header object::

    {"format": "msgp-archive", "version": 1,
     "config": {...}, "config_digest": "<sha256>",
     "design_digest": "<sha256 of design CSV>" | null,
     "outputs_digest": "<sha256 of outputs CSV>" | null,
     "specs": [...], "X": [[...]], "Y": [[...]],
     "output_names": [...], "column_means": [...], "column_sds": [...],
     "kernel": {...}, "prior": {...}, "basis": "linear", "cutoff": c,
     "ordering": "mindegree",
     "chains": [{"chain": 0, "seed": 1, "accept_rate": 0.23,
                 "final_chol": [[...]] | null}, ...],
     "n_draws": N}

``X`` is the scaled design and ``Y`` the (standardized) outputs the model
was fit on.  Each following line is one thinned posterior draw::

    {"chain": 0, "iteration": 1010, "tau": [...], "B": [[...]], "Sigma": [[...]]}

Floats are written by ``json`` with round-trip precision, so a loaded model
reproduces the fitted one exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .design import DesignMatrix, OutputMatrix, VariableSpec
from .emulator import MniwPrior, MsgpModel, PosteriorDraw
from .kernels import KernelSpec
from .mcmc import ChainResult

FORMAT = "msgp-archive"
VERSION = 1


class ArchiveError(ValueError):
    """Unreadable or inconsistent model archive."""


@dataclass
class FittedModel:
    """A model, its posterior draws and the metadata of the run."""

    model: MsgpModel
    draws: List[PosteriorDraw]
    header: dict = field(default_factory=dict)

    @property
    def config_digest(self) -> str:
        return self.header.get("config_digest", "")

    def chains(self) -> List[List[PosteriorDraw]]:
        """Draws grouped by chain, in chain order."""
        ids = sorted({d.chain for d in self.draws})
        return [[d for d in self.draws if d.chain == c] for c in ids]


def save_archive(
    path,
    model: MsgpModel,
    chains: Sequence[ChainResult],
    config: Optional[dict] = None,
    config_digest: str = "",
    design_digest: Optional[str] = None,
    outputs_digest: Optional[str] = None,
) -> None:
    """Write a model and its chains to a JSON-lines archive."""
    specs = model.design.specs if model.design is not None else [
        VariableSpec.continuous(f"x{j + 1}", -1.0, 1.0) for j in range(model.p)]
    out = model.outputs
    draws = [d for ch in chains for d in ch.draws]
    header = {
        "format": FORMAT,
        "version": VERSION,
        "config": config or {},
        "config_digest": config_digest,
        "design_digest": design_digest,
        "outputs_digest": outputs_digest,
        "specs": [s.to_dict() for s in specs],
        "X": model.X.tolist(),
        "Y": model.Y.tolist(),
        "output_names": list(out.names),
        "column_means": np.asarray(out.column_means).tolist(),
        "column_sds": np.asarray(out.column_sds).tolist(),
        "standardized": bool(out.standardized),
        "kernel": model.kernel.to_dict(),
        "prior": model.prior.to_dict(),
        "basis": model.basis,
        "cutoff": model.cutoff,
        "ordering": model.ordering,
        "chains": [
            {"chain": ch.chain, "seed": ch.seed, "accept_rate": ch.accept_rate,
             "final_chol": None if ch.final_chol is None else ch.final_chol.tolist()}
            for ch in chains
        ],
        "n_draws": len(draws),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for d in draws:
            fh.write(json.dumps(d.to_dict()) + "\n")


def load_archive(path) -> FittedModel:
    """Read an archive written by :func:`save_archive`."""
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ArchiveError(f"{path}: empty archive")
    try:
        header = json.loads(lines[0])
        if header.get("format") != FORMAT:
            raise ArchiveError(f"{path}: not a model archive")
        specs = [VariableSpec.from_dict(s) for s in header["specs"]]
        X = np.array(header["X"], dtype=float)
        design = DesignMatrix(X, specs, scaled=True)
        outputs = OutputMatrix(np.array(header["Y"], dtype=float), header["column_means"],
                               header["column_sds"], header.get("standardized", True),
                               header["output_names"])
        prior = MniwPrior.from_dict(header["prior"])
        model = MsgpModel(design, outputs, KernelSpec.from_dict(header["kernel"]),
                          header["basis"], prior, header["cutoff"], header["ordering"])
        draws = [PosteriorDraw.from_dict(json.loads(ln)) for ln in lines[1:]]
    except (KeyError, TypeError, json.JSONDecodeError) as err:
        raise ArchiveError(f"{path}: malformed archive ({err})") from None
    if len(draws) != header.get("n_draws", len(draws)):
        raise ArchiveError(f"{path}: expected {header['n_draws']} draws, found {len(draws)}")
    return FittedModel(model, draws, header)
