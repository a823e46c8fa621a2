import csv
import json

import numpy as np
import pytest

from msgp.cli import main
from msgp.design import read_matrix_csv

SMALL = {
    "kernel": {"family": "power_exponential", "cutoff": 16},
    "mcmc": {"iterations": 200, "burn_in": 100, "thin": 10, "chains": 2},
    "sa": {"s": 300, "max_draws": 5, "main_effect_grid": 3, "main_effect_samples": 50,
           "main_effect_draws": 2},
    "cv": {"folds": 2, "omegas": [0.9, 0.95], "iterations": 40, "burn_in": 20},
}


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["testfn", "--name", "sobol-g", "--n", "48", "--seed", "3",
                 "--out", str(root / "g")]) == 0
    cfg = root / "small.json"
    cfg.write_text(json.dumps(SMALL))
    return root, cfg


def test_testfn_bundle(bundle):
    root, _ = bundle
    g = root / "g"
    names, values = read_matrix_csv(g / "design.csv")
    assert names == [f"x{j}" for j in range(1, 9)] and values.shape == (48, 8)
    oracle = json.loads((g / "oracle.json").read_text())
    assert oracle["method"] == "analytic" and len(oracle["S"]) == 8
    run = json.loads((g / "run.json").read_text())
    assert run["kernel"]["family"] == "power_exponential"
    assert run["mcmc"]["iterations"] == 10_000 and run["mcmc"]["chains"] == 3


def test_run_pipeline_reproducible(bundle, capsys):
    root, cfg = bundle
    g = root / "g"
    args = ["run", "--config", str(cfg), "--design", str(g / "design.csv"),
            "--outputs", str(g / "outputs.csv"), "--seed", "11"]
    assert main(args + ["--out", str(root / "r1")]) == 0
    assert main(args + ["--out", str(root / "r2")]) == 0
    a = (root / "r1" / "indices.json").read_bytes()
    assert a == (root / "r2" / "indices.json").read_bytes()
    ind = json.loads(a)
    assert ind["inputs"] == [f"x{j}" for j in range(1, 9)]
    with open(root / "r1" / "psrf.csv") as fh:
        lines = fh.read().splitlines()
    assert lines[0].startswith("# config_digest=")
    assert lines[1] == "parameter,psrf,upper"
    assert (root / "r1" / "model.bin").exists()


def test_fit_diag_sa_predict(bundle):
    root, cfg = bundle
    g = root / "g"
    model = root / "fit" / "model.bin"
    assert main(["fit", "--config", str(cfg), "--design", str(g / "design.csv"),
                 "--outputs", str(g / "outputs.csv"), "--out", str(model)]) == 0
    assert main(["diag", "--model", str(model), "--out", str(root / "fit" / "psrf.csv")]) == 0
    assert main(["sa", "--model", str(model), "--s", "200", "--max-draws", "3",
                 "--main-effects", "0", "--out", str(root / "fit" / "idx.json")]) == 0
    idx = json.loads((root / "fit" / "idx.json").read_text())
    assert len(idx["S"]["mean"]) == 8
    assert main(["predict", "--model", str(model), "--design", str(g / "design.csv"),
                 "--max-draws", "3", "--out", str(root / "fit" / "pred.csv")]) == 0
    with open(root / "fit" / "pred.csv") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    assert len(rows) == 49


def test_cv(bundle):
    root, cfg = bundle
    g = root / "g"
    assert main(["cv", "--config", str(cfg), "--design", str(g / "design.csv"),
                 "--outputs", str(g / "outputs.csv"), "--out", str(root / "cv.json")]) == 0
    rep = json.loads((root / "cv.json").read_text())
    assert len(rep["table"]) >= 2


def test_design_command(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps([
        {"name": "a", "kind": "continuous", "lower": 0.0, "upper": 2.0},
        {"name": "b", "kind": "continuous", "lower": -5.0, "upper": 5.0},
    ]))
    out = tmp_path / "d.csv"
    assert main(["design", "--spec", str(spec), "--n", "20", "--seed", "1", "--out", str(out)]) == 0
    names, values = read_matrix_csv(out)
    assert names == ["a", "b"] and values.shape == (20, 2)
    assert values[:, 0].min() >= 0 and values[:, 0].max() <= 2


def test_missing_file_exit_code(tmp_path, capsys):
    code = main(["fit", "--design", str(tmp_path / "nope.csv"), "--outputs", "y.csv",
                 "--out", str(tmp_path / "m.bin")])
    assert code == 2
    assert "[validate]" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, bundle, capsys):
    root, _ = bundle
    bad = tmp_path / "bad.json"
    bad.write_text('{"mcmc": {"steps": 3}}')
    g = root / "g"
    code = main(["fit", "--config", str(bad), "--design", str(g / "design.csv"),
                 "--outputs", str(g / "outputs.csv"), "--out", str(tmp_path / "m.bin")])
    assert code == 2
    assert "steps" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["fit"])
    assert info.value.code == 2
