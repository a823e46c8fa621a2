"""Command-line interface.

Subcommands: ``design``, ``testfn``, ``fit``, ``cv``, ``predict``, ``sa``,
``diag`` and ``run`` (the full pipeline).  Exit status is 0 on success, 1 on
a numerical failure and 2 on an I/O or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from .archive import ArchiveError, load_archive, save_archive
from .config import (
    ConfigError,
    RunConfig,
    file_digest,
    load_config,
)
from .design import (
    DesignError,
    DesignMatrix,
    OutputMatrix,
    VariableSpec,
    destandardize_values,
    lhs_sample,
    load_specs,
    mixed_design,
    read_design_csv,
    read_outputs_csv,
    save_specs,
    scale_inputs,
    standardize_outputs,
    write_design_csv,
    write_matrix_csv,
)
from .emulator import EmulatorError, MsgpModel, predict_posterior
from .kernels import KernelError, KernelSpec
from .mcmc import McmcConfig, McmcError, compute_psrf, run_parallel_chains
from .sensitivity import SensitivityError, analyse, saltelli_oracle, select_draws
from .sparse import NotPositiveDefinite
from .testfns import DomainError, get_test_function, sobol_g_oracle
from .validation import ValidationError, cross_validate

EXIT_OK, EXIT_NUMERIC, EXIT_IO = 0, 1, 2

IO_ERRORS = (OSError, ConfigError, DesignError, ArchiveError, KernelError, McmcError,
             DomainError, ValidationError, json.JSONDecodeError)
NUMERIC_ERRORS = (NotPositiveDefinite, EmulatorError, SensitivityError,
                  np.linalg.LinAlgError, FloatingPointError)


class StageError(Exception):
    """An error tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage
        self.err = err


# ---------------------------------------------------------------------------
# helpers


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


def _resolve_config(args) -> RunConfig:
    path = getattr(args, "config", None)
    cfg = load_config(_require(path, "config")) if path else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "threads", None):
        cfg.workers = int(args.threads)
    return cfg


def _chain_seeds(cfg: RunConfig) -> List[int]:
    if cfg.mcmc.seeds is not None:
        return list(cfg.mcmc.seeds)[:cfg.mcmc.chains]
    state = np.random.SeedSequence(cfg.seed).generate_state(cfg.mcmc.chains)
    return [int(s) for s in state]


def _find_specs(design_path: Path, spec_path: Optional[str]) -> Optional[List[VariableSpec]]:
    if spec_path:
        return load_specs(_require(spec_path, "spec"))
    for cand in (design_path.with_suffix(".spec.json"), design_path.parent / "spec.json"):
        if cand.is_file():
            return load_specs(cand)
    return None


def load_design(path, spec_path=None) -> DesignMatrix:
    """Read a design CSV and scale it with its sidecar specs.

    Without a spec file every column is treated as continuous over its
    observed range.
    """
    p = _require(path, "design")
    specs = _find_specs(p, spec_path)
    if specs is None:
        from .design import read_matrix_csv

        names, values = read_matrix_csv(p)
        warnings.warn(f"{p}: no spec file; using observed column ranges", stacklevel=2)
        specs = [VariableSpec.continuous(nm, float(values[:, k].min()), float(values[:, k].max()))
                 for k, nm in enumerate(names)]
    design = read_design_csv(p, specs)
    if not np.all(np.isfinite(design.values)):
        raise DesignError(f"{p}: design contains missing or non-finite values")
    for k, s in enumerate(design.specs):
        col = design.values[:, k]
        if s.is_continuous and (col.min() < s.lower - 1e-12 or col.max() > s.upper + 1e-12):
            raise DesignError(f"{p}: column {s.name} lies outside [{s.lower}, {s.upper}]")
        if not s.is_continuous and np.any((col != np.round(col)) | (col < 0)
                                          | (col >= s.n_levels)):
            raise DesignError(f"{p}: column {s.name} has invalid level codes")
    return scale_inputs(design)


def load_outputs(path, n: int, standardize: bool = True) -> OutputMatrix:
    out = read_outputs_csv(_require(path, "outputs"))
    if out.n != n:
        raise DesignError(f"{path}: {out.n} output rows but the design has {n}")
    if not np.all(np.isfinite(out.values)):
        raise DesignError(f"{path}: outputs contain missing or non-finite values")
    return standardize_outputs(out) if standardize else out


def build_model(cfg: RunConfig, design: DesignMatrix, outputs: OutputMatrix) -> MsgpModel:
    from .emulator import build_basis

    q = build_basis(design.values[:1], cfg.basis).shape[1]
    prior = cfg.prior.build(q, outputs.m)
    return MsgpModel(design, outputs, cfg.kernel, cfg.basis, prior, None, cfg.ordering)


def fit_model(cfg: RunConfig, model: MsgpModel):
    mode = "process" if cfg.workers > 1 else "sequential"
    return run_parallel_chains(model, cfg.mcmc, seeds=_chain_seeds(cfg), mode=mode,
                               workers=cfg.workers)


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except (StageError, KeyboardInterrupt):
        raise
    except IO_ERRORS + NUMERIC_ERRORS as err:
        raise StageError(name, err) from err


# ---------------------------------------------------------------------------
# subcommands


def cmd_design(args) -> int:
    specs = load_specs(_require(args.spec, "spec"))
    seed = args.seed if args.seed is not None else 0
    d = lhs_sample(specs, args.n, optimize=args.optimize, seed=seed,
                   iterations=args.iterations, restarts=args.restarts)
    d = mixed_design(d, seed=seed + 1, cap=args.cap)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_design_csv(d, out)
    save_specs(d.specs, out.with_suffix(".spec.json"))
    meta = {k: v for k, v in d.metadata.items()}
    print(json.dumps({"rows": d.n, "columns": d.p, **meta}, sort_keys=True, default=float))
    return EXIT_OK


def default_bundle_config(name: str, p: int) -> dict:
    """Run config written next to a test-function bundle."""
    cfg = RunConfig(
        kernel=KernelSpec("power_exponential", cutoff=2.0 * p),
        mcmc=McmcConfig(iterations=10_000, burn_in=1_000, thin=10, chains=3),
    )
    return cfg.to_dict()


def cmd_testfn(args) -> int:
    a = tuple(float(v) for v in args.a.split(",")) if args.a else None
    tf = get_test_function(args.name, **({"a": a} if a else {}), q=args.q)
    seed = args.seed if args.seed is not None else 0
    specs = [VariableSpec.continuous(f"x{j + 1}", lo, hi)
             for j, (lo, hi) in enumerate(zip(tf.lower, tf.upper))]
    d = lhs_sample(specs, args.n, optimize=args.optimize, seed=seed,
                   iterations=args.iterations)
    Y = tf.fn(d.values)
    Y = Y[:, None] if Y.ndim == 1 else Y
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_design_csv(d, out / "design.csv")
    save_specs(specs, out / "design.spec.json")
    onames = ["y"] if tf.m == 1 else [f"t{k + 1}" for k in range(tf.m)]
    write_matrix_csv(out / "outputs.csv", onames, Y)
    if tf.name == "sobol-g":
        S, ST = sobol_g_oracle(a or (0, 1, 4.5, 9, 99, 99, 99, 99))
        oracle = {"method": "analytic", "S": S.tolist(), "ST": ST.tolist()}
    else:
        dec, ind = saltelli_oracle(tf.scaled, tf.p, args.oracle_samples, seed=seed)
        oracle = {"method": "saltelli", "samples": args.oracle_samples,
                  **{k: np.asarray(v).tolist() for k, v in ind.items()}}
    oracle["name"] = tf.name
    _write_json(out / "oracle.json", oracle)
    _write_json(out / "run.json", default_bundle_config(tf.name, tf.p))
    print(f"wrote {tf.name} bundle ({args.n} points) to {out}")
    return EXIT_OK


def _fit(cfg, design_path, outputs_path, spec_path, out_path):
    design = _stage("validate", load_design, design_path, spec_path)
    outputs = _stage("standardize", load_outputs, outputs_path, design.n, cfg.standardize)
    model = _stage("fit", build_model, cfg, design, outputs)
    chains = _stage("fit", fit_model, cfg, model)
    digest = cfg.digest()
    _stage("fit", save_archive, out_path, model, chains, cfg.to_dict(), digest,
           file_digest(design_path), file_digest(outputs_path))
    return model, chains, digest


def cmd_fit(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _, chains, _ = _fit(cfg, args.design, args.outputs, args.spec, out)
    rates = ", ".join(f"{c.accept_rate:.3f}" for c in chains)
    print(f"wrote {out}: {sum(len(c.draws) for c in chains)} draws, acceptance {rates}")
    return EXIT_OK


def psrf_rows(fitted_chains):
    from .mcmc import ChainResult

    report = compute_psrf([ChainResult(ch, 0.0, 0, k) for k, ch in enumerate(fitted_chains)])
    return report


def _write_psrf(path, chains, digest):
    report = _stage("diag", psrf_rows, chains)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# config_digest={digest}\n")
        fh.write("parameter,psrf,upper\n")
        for name, pt, up in report.to_rows():
            fh.write(f"{name},{float(pt)!r},{float(up)!r}\n")
    return report


def cmd_diag(args) -> int:
    fm = load_archive(_require(args.model, "model"))
    report = _write_psrf(args.out, fm.chains(), fm.config_digest)
    print(f"wrote {args.out}: {report.fraction_below(1.1):.3f} of parameters with PSRF < 1.1")
    return EXIT_OK


def _sa(fm, cfg_sa: dict, s, seed, out_path, main_effect_grid=None, max_draws=None,
        estimator=None):
    opts = dict(cfg_sa)
    grid = opts["main_effect_grid"] if main_effect_grid is None else main_effect_grid
    res = _stage("sa", analyse, fm.model, fm.draws, s=s, seed=seed,
                 estimator=estimator or opts["estimator"],
                 max_draws=opts["max_draws"] if max_draws is None else max_draws,
                 main_effect_grid=grid, main_effect_samples=opts["main_effect_samples"],
                 main_effect_draws=opts["main_effect_draws"])
    doc = res.indices.to_dict()
    doc["config_digest"] = fm.config_digest
    doc["s"] = s
    doc["seed"] = seed
    doc["output_correlation"] = np.asarray(res.output_corr).tolist()
    out = Path(out_path)
    _write_json(out, doc)
    stem = out.with_suffix("")
    for curve in res.main_effects:
        for i, oname in enumerate(fm.model.outputs.names):
            rows = curve.to_rows(i)
            name = fm.model.design.names[curve.input]
            path = Path(f"{stem}_main_{name}_{oname}.csv")
            write_matrix_csv(path, ["x", "mean", "q025", "q975"], rows,
                             f"config_digest={fm.config_digest}")
    return res


def cmd_sa(args) -> int:
    fm = load_archive(_require(args.model, "model"))
    cfg_sa = fm.header.get("config", {}).get("sa") or RunConfig().to_dict()["sa"]
    s = args.s if args.s is not None else cfg_sa["s"]
    seed = args.seed if args.seed is not None else 0
    _sa(fm, cfg_sa, s, seed, args.out, args.main_effects, args.max_draws, args.estimator)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    fm = load_archive(_require(args.model, "model"))
    model = fm.model
    Xs = load_design(args.design, args.spec) if args.spec else None
    if Xs is None:
        specs = model.design.specs
        Xs = scale_inputs(read_design_csv(_require(args.design, "design"), specs))
    if Xs.names != model.design.names:
        raise DesignError(f"{args.design}: columns {Xs.names} differ from the model's "
                          f"{model.design.names}")
    taus = [d.tau for d in select_draws(fm.draws, args.max_draws)]
    pred = _stage("predict", predict_posterior, model, taus, Xs.values, args.level)
    mu, sd = model.outputs.column_means, model.outputs.column_sds
    cols, names = [], []
    for i, on in enumerate(model.outputs.names):
        cols += [destandardize_values(pred.mean[:, i], mu[i], sd[i]), pred.sd[:, i] * sd[i],
                 destandardize_values(pred.lower[:, i], mu[i], sd[i]),
                 destandardize_values(pred.upper[:, i], mu[i], sd[i])]
        names += [f"{on}_mean", f"{on}_sd", f"{on}_lower", f"{on}_upper"]
    write_matrix_csv(args.out, names, np.column_stack(cols),
                     f"config_digest={fm.config_digest}")
    print(f"wrote {args.out}: {Xs.n} points")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = _resolve_config(args)
    design = _stage("validate", load_design, args.design, args.spec)
    outputs = _stage("standardize", load_outputs, args.outputs, design.n, False)
    omegas = [float(w) for w in args.omegas.split(",")] if args.omegas else cfg.cv.omegas
    folds = args.folds or cfg.cv.folds
    mc = McmcConfig(iterations=cfg.cv.iterations, burn_in=cfg.cv.burn_in, thin=cfg.cv.thin,
                    chains=1, target_accept=cfg.mcmc.target_accept, gamma=cfg.mcmc.gamma)
    extra = [KernelSpec.from_dict(k) for k in cfg.cv.extra_kernels]
    from .emulator import build_basis

    q = build_basis(design.values[:1], cfg.basis).shape[1]
    rep = _stage("cv", cross_validate, design.values, outputs, cfg.kernel, omegas, folds,
                 cfg.basis, cfg.prior.build(q, outputs.m), mc, cfg.seed, extra, cfg.workers)
    digest = cfg.digest()
    doc = rep.to_dict()
    doc["config_digest"] = digest
    out = Path(args.out)
    _write_json(out, doc)
    stem = out.with_suffix("")
    for k, lv in enumerate(rep.levels):
        names = ["fold"] + [f"{n}_obs" for n in rep.output_names] + [
            f"{n}_pred" for n in rep.output_names]
        vals = np.column_stack([rep.folds, rep.Y, lv.predictions])
        write_matrix_csv(f"{stem}_predictions_{lv.kernel}_{lv.omega:g}.csv", names, vals,
                         f"config_digest={digest}")
    for row in rep.table():
        print(f"{row['kernel']:>18s} omega={row['omega']:<5g} P={row['P_mean']:.4f} "
              f"rho={row['rho_mean']:.4f} time={row['fit_time']:.2f}s")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _fit(cfg, args.design, args.outputs, args.spec, out / "model.bin")
    fm = _stage("fit", load_archive, out / "model.bin")
    report = _write_psrf(out / "psrf.csv", fm.chains(), fm.config_digest)
    sa_cfg = cfg.to_dict()["sa"]
    _sa(fm, sa_cfg, cfg.sa.s, cfg.seed, out / "indices.json")
    print(f"pipeline complete in {out}: PSRF < 1.1 for "
          f"{report.fraction_below(1.1):.3f} of parameters")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master random seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes for chains and folds")
    common.add_argument("--config", default=argparse.SUPPRESS, help="run-config JSON")

    parser = argparse.ArgumentParser(prog="msgp", parents=[common],
                                     description="Sparse multivariate GP sensitivity analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="Latin hypercube design")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--cap", type=int, default=10_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("testfn", parents=[common], help="benchmark data bundle")
    p.add_argument("--name", required=True)
    p.add_argument("--a", default=None, help="comma-separated g-function coefficients")
    p.add_argument("--q", type=int, default=100, help="time steps for arctan-temporal")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--oracle-samples", type=int, default=100_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_testfn)

    for name, fn, hlp in (("fit", cmd_fit, "fit the emulator by MCMC"),
                          ("run", cmd_run, "fit, diagnose and analyse")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--design", required=True)
        p.add_argument("--outputs", required=True)
        p.add_argument("--spec", default=None)
        p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("cv", parents=[common], help="cross-validate sparsity levels")
    p.add_argument("--design", required=True)
    p.add_argument("--outputs", required=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--omegas", default=None, help="comma-separated sparsity levels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", parents=[common], help="posterior predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--design", required=True)
    p.add_argument("--spec", default=None)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--max-draws", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sa", parents=[common], help="sensitivity indices")
    p.add_argument("--model", required=True)
    p.add_argument("--s", type=int, default=None)
    p.add_argument("--max-draws", type=int, default=None)
    p.add_argument("--estimator", default=None,
                   choices=["difference", "centered", "uncentered"])
    p.add_argument("--main-effects", type=int, default=None, help="grid size (0 = none)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sa)

    p = sub.add_parser("diag", parents=[common], help="PSRF convergence table")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key in ("seed", "threads", "config"):
        if not hasattr(args, key):
            setattr(args, key, None)
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.func(args)
    except StageError as err:
        code = EXIT_NUMERIC if isinstance(err.err, NUMERIC_ERRORS) else EXIT_IO
        print(f"msgp: {err}", file=sys.stderr)
        return code
    except NUMERIC_ERRORS as err:
        print(f"msgp: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except IO_ERRORS as err:
        print(f"msgp: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
