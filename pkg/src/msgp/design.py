"""Space-filling designs for mixed inputs and input/output normalization."""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import qmc


class DesignError(ValueError):
    """Invalid design specification or data."""


@dataclass(frozen=True)
class VariableSpec:
    """One input variable: continuous with a range, or categorical with levels."""

    name: str
    kind: str = "continuous"
    lower: float = 0.0
    upper: float = 1.0
    levels: tuple = ()

    def __post_init__(self):
        if not self.name:
            raise DesignError("variable name must be non-empty")
        if self.kind == "continuous":
            if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
                raise DesignError(f"{self.name}: range must be finite")
            if not self.lower < self.upper:
                raise DesignError(
                    f"{self.name}: lower ({self.lower}) must be < upper ({self.upper})"
                )
        elif self.kind == "categorical":
            object.__setattr__(self, "levels", tuple(self.levels))
            if len(self.levels) == 0:
                raise DesignError(f"{self.name}: categorical level list is empty")
            if len(set(self.levels)) != len(self.levels):
                raise DesignError(f"{self.name}: categorical levels must be distinct")
        else:
            raise DesignError(f"{self.name}: unknown kind {self.kind!r}")

    @classmethod
    def continuous(cls, name, lower=0.0, upper=1.0) -> "VariableSpec":
        return cls(name, "continuous", float(lower), float(upper))

    @classmethod
    def categorical(cls, name, levels) -> "VariableSpec":
        return cls(name, "categorical", levels=tuple(levels))

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous"

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def to_dict(self) -> dict:
        if self.is_continuous:
            return {"name": self.name, "kind": "continuous",
                    "lower": self.lower, "upper": self.upper}
        return {"name": self.name, "kind": "categorical", "levels": list(self.levels)}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSpec":
        kind = d.get("kind", "continuous")
        if kind == "continuous":
            return cls.continuous(d["name"], d["lower"], d["upper"])
        return cls.categorical(d["name"], d["levels"])


@dataclass
class DesignMatrix:
    """An ``n x p`` design with per-column variable specs.

    Categorical columns hold integer level codes when unscaled.
    """

    values: np.ndarray
    specs: List[VariableSpec]
    scaled: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.specs):
            raise DesignError("design values must be n x p with one spec per column")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> List[str]:
        return [s.name for s in self.specs]

    def has_duplicate_rows(self) -> bool:
        return np.unique(self.values, axis=0).shape[0] != self.n


@dataclass
class OutputMatrix:
    """An ``n x m`` output matrix with standardization metadata."""

    values: np.ndarray
    column_means: np.ndarray = None
    column_sds: np.ndarray = None
    standardized: bool = False
    names: Optional[List[str]] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        self.values = v
        m = v.shape[1]
        if self.column_means is None:
            self.column_means = np.zeros(m)
        if self.column_sds is None:
            self.column_sds = np.ones(m)
        self.column_means = np.asarray(self.column_means, dtype=float)
        self.column_sds = np.asarray(self.column_sds, dtype=float)
        if self.names is None:
            self.names = [f"y{i + 1}" for i in range(m)]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# Latin hypercube sampling


def _min_distance(U) -> float:
    return float(pdist(U).min())


def _maximin(U, rng, iterations: int):
    """Hill-climb on the minimum pairwise L2 distance by within-column swaps.

    Each step swaps one coordinate between a point of the closest pair and a
    random other point; the swap is kept when the minimum distance does not
    decrease.  Swaps keep every column a permutation of its strata.
    """
    n, d = U.shape
    D = squareform(pdist(U, "sqeuclidean"))
    np.fill_diagonal(D, np.inf)
    best = D.min()
    for _ in range(iterations):
        flat = int(np.argmin(D))
        i, j = divmod(flat, n)
        a = i if rng.random() < 0.5 else j
        r = int(rng.integers(n - 1))
        r += r >= a
        k = int(rng.integers(d))
        U[[a, r], k] = U[[r, a], k]
        rows_a = np.sum((U - U[a]) ** 2, axis=1)
        rows_r = np.sum((U - U[r]) ** 2, axis=1)
        old_a, old_r = D[a].copy(), D[r].copy()
        D[a], D[:, a] = rows_a, rows_a
        D[r], D[:, r] = rows_r, rows_r
        D[a, a] = D[r, r] = np.inf
        cand = D.min()
        if cand >= best:
            best = cand
        else:
            U[[a, r], k] = U[[r, a], k]
            D[a], D[:, a] = old_a, old_a
            D[r], D[:, r] = old_r, old_r
            D[a, r] = D[r, a] = old_a[r]
    return U, float(np.sqrt(best))


def lhs_sample(
    specs: Sequence[VariableSpec],
    n: int,
    optimize: bool = False,
    seed: int = 0,
    iterations: int = 2000,
    restarts: int = 1,
) -> DesignMatrix:
    """Latin hypercube sample over the continuous variables.

    Parameters
    ----------
    specs : sequence of VariableSpec
    n : int
        Number of design points, at least 2.
    optimize : bool
        Improve the maximin distance by column swaps.
    seed : int
    iterations : int
        Swap attempts per restart.
    restarts : int
        Independent restarts, each with a seed derived from ``seed``; the
        first restart starts from the unoptimized draw.

    Returns
    -------
    DesignMatrix
        Unscaled design; categorical columns are NaN until
        :func:`mixed_design` fills them.
    """
    specs = list(specs)
    if n < 2:
        raise DesignError("lhs_sample requires n >= 2")
    if not specs:
        raise DesignError("spec list is empty")
    cont = [i for i, s in enumerate(specs) if s.is_continuous]
    if not cont:
        raise DesignError("lhs_sample requires at least one continuous variable")
    children = np.random.SeedSequence(seed).spawn(max(restarts, 1))
    U = qmc.LatinHypercube(d=len(cont), seed=np.random.default_rng(children[0])).random(n)
    initial = _min_distance(U)
    score = initial
    if optimize:
        best_U, score = None, -np.inf
        for r, child in enumerate(children):
            rng = np.random.default_rng(child)
            start = U.copy() if r == 0 else qmc.LatinHypercube(d=len(cont), seed=rng).random(n)
            cand, cand_score = _maximin(start, rng, iterations)
            if cand_score > score:
                best_U, score = cand, cand_score
        U = best_U
    values = np.full((n, len(specs)), np.nan)
    for col, i in enumerate(cont):
        s = specs[i]
        values[:, i] = s.lower + U[:, col] * (s.upper - s.lower)
    meta = {"n_continuous_rows": n, "crossing": "none", "optimized": bool(optimize),
            "min_distance_initial": initial, "min_distance": score, "seed": seed}
    return DesignMatrix(values, specs, scaled=False, metadata=meta)


def mixed_design(
    continuous: DesignMatrix,
    specs: Optional[Sequence[VariableSpec]] = None,
    seed: int = 0,
    cap: int = 10_000,
) -> DesignMatrix:
    """Fill categorical columns of an LHS design.

    With ``n`` continuous rows and ``L`` level combinations, the rows are
    crossed with the full Cartesian product when ``n * L <= cap``; otherwise
    each categorical column receives a balanced random assignment of codes
    (every level appears ``floor(n/L_j)`` or ``ceil(n/L_j)`` times).
    Single-level categoricals are dropped with a warning.
    """
    specs = list(continuous.specs if specs is None else specs)
    cat = [i for i, s in enumerate(specs) if not s.is_continuous]
    if not cat:
        return continuous
    for i in cat:
        if specs[i].n_levels == 0:
            raise DesignError(f"{specs[i].name}: categorical level list is empty")
    dropped = [specs[i].name for i in cat if specs[i].n_levels == 1]
    if dropped:
        warnings.warn(f"dropping single-level categorical variables: {dropped}",
                      stacklevel=2)
    keep = [i for i, s in enumerate(specs) if s.is_continuous or s.n_levels > 1]
    specs_kept = [specs[i] for i in keep]
    base = continuous.values[:, keep]
    cat = [j for j, s in enumerate(specs_kept) if not s.is_continuous]
    n = base.shape[0]
    meta = dict(continuous.metadata)
    meta["dropped"] = dropped
    meta["n_continuous_rows"] = n
    if not cat:
        meta["crossing"] = "none"
        return DesignMatrix(base, specs_kept, continuous.scaled, meta)
    sizes = [specs_kept[j].n_levels for j in cat]
    combos = int(np.prod(sizes))
    rng = np.random.default_rng(seed)
    if n * combos <= cap:
        grid = np.array(list(itertools.product(*[range(L) for L in sizes])), dtype=float)
        values = np.repeat(base, combos, axis=0)
        values[:, cat] = np.tile(grid, (n, 1))
        meta["crossing"] = "full"
    else:
        values = base.copy()
        for j, L in zip(cat, sizes):
            values[:, j] = rng.permutation(np.resize(np.arange(L), n))
        meta["crossing"] = "sampled"
    meta["n_rows"] = values.shape[0]
    return DesignMatrix(values, specs_kept, continuous.scaled, meta)


# ---------------------------------------------------------------------------
# scaling


def _affine(spec: VariableSpec):
    if spec.is_continuous:
        width = spec.upper - spec.lower
        if not width > 0:
            raise DesignError(f"{spec.name}: zero-width range")
        return spec.lower, width
    L = spec.n_levels
    if L < 2:
        raise DesignError(f"{spec.name}: cannot scale a single-level categorical")
    return 0.0, float(L - 1)


def scale_inputs(design: DesignMatrix) -> DesignMatrix:
    """Map every column affinely onto ``[-1, 1]`` using the variable ranges.

    Categorical codes ``0..L-1`` become ``2 * code / (L - 1) - 1``.
    """
    if design.scaled:
        raise DesignError("design is already scaled")
    out = np.empty_like(design.values)
    for k, s in enumerate(design.specs):
        lo, width = _affine(s)
        out[:, k] = 2.0 * (design.values[:, k] - lo) / width - 1.0
    return DesignMatrix(out, list(design.specs), True, dict(design.metadata))


def unscale_inputs(design: DesignMatrix) -> DesignMatrix:
    """Inverse of :func:`scale_inputs`; categorical codes are rounded."""
    if not design.scaled:
        raise DesignError("design is not scaled")
    out = np.empty_like(design.values)
    for k, s in enumerate(design.specs):
        lo, width = _affine(s)
        out[:, k] = lo + (design.values[:, k] + 1.0) * width / 2.0
        if not s.is_continuous:
            out[:, k] = np.round(out[:, k])
    return DesignMatrix(out, list(design.specs), False, dict(design.metadata))


def standardize_outputs(outputs: OutputMatrix) -> OutputMatrix:
    """Center each column and scale it to unit sample standard deviation."""
    if outputs.standardized:
        raise DesignError("outputs are already standardized")
    Y = outputs.values
    if Y.shape[0] < 2:
        raise DesignError("standardization requires n >= 2")
    mu = Y.mean(axis=0)
    sd = Y.std(axis=0, ddof=1)
    bad = np.nonzero(~(sd > 0))[0]
    if bad.size:
        raise DesignError(f"constant output column: {outputs.names[bad[0]]}")
    return OutputMatrix((Y - mu) / sd, mu, sd, True, list(outputs.names))


def destandardize(outputs: OutputMatrix) -> OutputMatrix:
    """Undo :func:`standardize_outputs`."""
    if not outputs.standardized:
        return outputs
    Y = outputs.values * outputs.column_sds + outputs.column_means
    return OutputMatrix(Y, None, None, False, list(outputs.names))


def destandardize_values(values, means, sds):
    """Apply stored means and sds to standardized predictions."""
    return np.asarray(values) * sds + means


# ---------------------------------------------------------------------------
# I/O


def save_specs(specs: Sequence[VariableSpec], path) -> None:
    with open(path, "w") as fh:
        json.dump({"variables": [s.to_dict() for s in specs]}, fh, indent=2)


def load_specs(path) -> List[VariableSpec]:
    with open(path) as fh:
        data = json.load(fh)
    items = data["variables"] if isinstance(data, dict) else data
    return [VariableSpec.from_dict(d) for d in items]


def write_matrix_csv(path, names: Sequence[str], values, comment: Optional[str] = None) -> None:
    """CSV with a header row; floats written with round-trip precision.

    An optional ``comment`` is written first as a ``#`` line.
    """
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(list(names))
        for row in np.asarray(values, dtype=float):
            w.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path):
    """Read a headed numeric CSV into ``(names, values)``; ``#`` lines are skipped."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
    if not rows:
        raise DesignError(f"{path}: empty file")
    names = rows[0]
    try:
        values = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as err:
        raise DesignError(f"{path}: non-numeric entry ({err})") from None
    if values.size == 0:
        values = values.reshape(0, len(names))
    if values.shape[1] != len(names):
        raise DesignError(f"{path}: row width does not match header")
    return names, values


def write_design_csv(design: DesignMatrix, path, comment: Optional[str] = None) -> None:
    write_matrix_csv(path, design.names, design.values, comment)


def read_design_csv(path, specs: Sequence[VariableSpec]) -> DesignMatrix:
    names, values = read_matrix_csv(path)
    order = {s.name: s for s in specs}
    missing = [nm for nm in names if nm not in order]
    if missing:
        raise DesignError(f"{path}: columns without a spec: {missing}")
    return DesignMatrix(values, [order[nm] for nm in names], scaled=False)


def read_outputs_csv(path) -> OutputMatrix:
    names, values = read_matrix_csv(path)
    return OutputMatrix(values, names=names)
