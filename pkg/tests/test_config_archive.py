import json

import numpy as np
import pytest

from msgp.archive import ArchiveError, load_archive, save_archive
from msgp.config import ConfigError, RunConfig, config_digest, file_digest, load_config
from msgp.emulator import MsgpModel
from msgp.kernels import KernelSpec
from msgp.mcmc import McmcConfig, run_parallel_chains


class TestRunConfig:
    def test_defaults_roundtrip(self):
        cfg = RunConfig()
        again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()
        assert again.digest() == cfg.digest()

    def test_shorthands(self):
        cfg = RunConfig.from_dict({"omega": 0.95, "nugget": 1e-6,
                                   "kernel": {"family": "matern_wendland"}})
        assert cfg.kernel.omega == 0.95 and cfg.kernel.nugget == 1e-6
        assert cfg.kernel.family == "matern_wendland"

    @pytest.mark.parametrize("bad", [
        {"colour": 1},
        {"kernel": {"family": "bohman", "size": 2}},
        {"mcmc": {"steps": 10}},
        {"prior": {"mean": 0}},
        {"sa": {"draws": 3}},
        {"cv": {"fold": 3}},
        {"basis": "cubic"},
        {"sa": {"s": 10}},
        {"cv": {"omegas": [1.0]}},
        {"prior": "flat"},
        [],
    ])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad)

    def test_digest_order_independent(self):
        assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
        assert RunConfig().digest() != RunConfig().with_seed(5).digest()

    def test_prior_build(self):
        cfg = RunConfig.from_dict({"prior": {"Lambda0": 0.5, "S0": 2.0}})
        pr = cfg.prior.build(3, 2)
        np.testing.assert_array_equal(pr.Lambda0, 0.5 * np.eye(3))
        np.testing.assert_array_equal(pr.S0, 2.0 * np.eye(2))
        assert pr.delta0 == 4.0
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"prior": {"S0": -1.0}}).prior.build(1, 1)

    def test_load(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"seed": 4}')
        assert load_config(p).seed == 4
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(p)
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "missing.json")
        assert len(file_digest(p)) == 64


class TestArchive:
    def test_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (30, 2))
        Y = np.column_stack([X[:, 0] ** 2 + X[:, 1], np.cos(X[:, 1])])
        model = MsgpModel(X, Y, KernelSpec("bohman", omega=0.9), "linear")
        chains = run_parallel_chains(model, McmcConfig(120, 20, 10, chains=2), mode="sequential")
        path = tmp_path / "m.bin"
        save_archive(path, model, chains, RunConfig().to_dict(), "abc")
        fm = load_archive(path)
        assert fm.config_digest == "abc"
        assert len(fm.draws) == 20 and len(fm.chains()) == 2
        flat = [d for c in chains for d in c.draws]
        for a, b in zip(flat, fm.draws):
            np.testing.assert_array_equal(a.tau, b.tau)
            np.testing.assert_array_equal(a.B, b.B)
            np.testing.assert_array_equal(a.Sigma, b.Sigma)
            assert (a.chain, a.iteration) == (b.chain, b.iteration)
        m2 = fm.model
        np.testing.assert_array_equal(m2.X, model.X)
        np.testing.assert_array_equal(m2.Y, model.Y)
        assert m2.cutoff == model.cutoff and m2.kernel == model.kernel
        tau = flat[-1].tau
        assert m2.log_marginal_tau(tau) == model.log_marginal_tau(tau)

    def test_bad_archives(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_text("")
        with pytest.raises(ArchiveError):
            load_archive(p)
        p.write_text('{"format": "other"}\n')
        with pytest.raises(ArchiveError):
            load_archive(p)
        p.write_text('{"format": "msgp-archive"}\n')
        with pytest.raises(ArchiveError, match="malformed"):
            load_archive(p)
