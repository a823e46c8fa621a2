import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msgp.design import (
    DesignError,
    DesignMatrix,
    OutputMatrix,
    VariableSpec,
    destandardize,
    lhs_sample,
    load_specs,
    mixed_design,
    read_design_csv,
    read_outputs_csv,
    save_specs,
    scale_inputs,
    standardize_outputs,
    unscale_inputs,
    write_design_csv,
    write_matrix_csv,
)


def _pairwise_min(U):
    from scipy.spatial.distance import pdist
    return pdist(U).min()


class TestVariableSpec:
    def test_continuous_requires_increasing_range(self):
        with pytest.raises(DesignError):
            VariableSpec.continuous("x", 1.0, 1.0)

    def test_categorical_rejects_empty_levels(self):
        with pytest.raises(DesignError):
            VariableSpec.categorical("c", [])

    def test_roundtrip_dict(self):
        for s in (VariableSpec.continuous("x", -2, 3), VariableSpec.categorical("c", ["a", "b"])):
            assert VariableSpec.from_dict(s.to_dict()) == s


class TestLhs:
    def test_strata_n4(self):
        d = lhs_sample([VariableSpec.continuous("x", 0, 1)], 4, seed=0)
        counts = np.histogram(d.values[:, 0], bins=[0, .25, .5, .75, 1.0])[0]
        np.testing.assert_array_equal(counts, 1)

    @given(n=st.integers(2, 60), p=st.integers(1, 4), seed=st.integers(0, 10**6))
    def test_one_point_per_stratum(self, n, p, seed):
        specs = [VariableSpec.continuous(f"x{k}", -3.0, 5.0) for k in range(p)]
        d = lhs_sample(specs, n, seed=seed)
        U = (d.values + 3.0) / 8.0
        for k in range(p):
            idx = np.floor(U[:, k] * n).astype(int)
            np.testing.assert_array_equal(np.sort(idx), np.arange(n))

    def test_optimized_not_worse(self):
        specs = [VariableSpec.continuous("a", 0, 1), VariableSpec.continuous("b", 0, 1)]
        plain = lhs_sample(specs, 100, seed=4)
        opt = lhs_sample(specs, 100, optimize=True, seed=4, iterations=500)
        assert _pairwise_min(opt.values) >= _pairwise_min(plain.values)
        assert opt.metadata["min_distance"] >= opt.metadata["min_distance_initial"]
        for k in range(2):
            idx = np.floor(opt.values[:, k] * 100).astype(int)
            np.testing.assert_array_equal(np.sort(idx), np.arange(100))

    def test_column_means_p8_n512(self):
        specs = [VariableSpec.continuous(f"x{k}", 0, 1) for k in range(8)]
        d = lhs_sample(specs, 512, seed=1)
        assert np.all(np.abs(d.values.mean(axis=0) - 0.5) < 0.02)

    def test_deterministic(self):
        specs = [VariableSpec.continuous("a", 0, 1), VariableSpec.continuous("b", 0, 1)]
        a = lhs_sample(specs, 30, optimize=True, seed=9, iterations=100)
        b = lhs_sample(specs, 30, optimize=True, seed=9, iterations=100)
        np.testing.assert_array_equal(a.values, b.values)

    def test_errors(self):
        with pytest.raises(DesignError):
            lhs_sample([VariableSpec.continuous("a")], 1)
        with pytest.raises(DesignError):
            lhs_sample([VariableSpec.categorical("c", [0, 1])], 5)
        with pytest.raises(DesignError):
            lhs_sample([], 5)

    def test_categorical_empty_before_mixing(self):
        specs = [VariableSpec.continuous("a"), VariableSpec.categorical("c", [0, 1])]
        d = lhs_sample(specs, 5)
        assert np.all(np.isnan(d.values[:, 1]))


class TestMixedDesign:
    def test_full_cross(self):
        specs = [VariableSpec.continuous("a"), VariableSpec.categorical("c", [0, 1])]
        d = mixed_design(lhs_sample(specs, 10, seed=2))
        assert d.n == 20 and d.metadata["crossing"] == "full"
        rows, counts = np.unique(d.values[:, 0], return_counts=True)
        assert rows.size == 10 and np.all(counts == 2)
        assert not d.has_duplicate_rows()

    def test_sampled_assignment_balanced(self):
        specs = [VariableSpec.continuous("a"), VariableSpec.categorical("c", list("abc")),
                 VariableSpec.categorical("d", list(range(10)))]
        d = mixed_design(lhs_sample(specs, 2000, seed=3), seed=4, cap=10_000)
        assert d.n == 2000 and d.metadata["crossing"] == "sampled"
        for col, L in ((1, 3), (2, 10)):
            freq = np.bincount(d.values[:, col].astype(int), minlength=L) / 2000
            assert np.all(np.abs(freq - 1 / L) <= 0.05 / L)

    def test_no_categoricals_identity(self):
        d = lhs_sample([VariableSpec.continuous("a")], 7)
        assert mixed_design(d) is d

    def test_single_level_dropped(self):
        specs = [VariableSpec.continuous("a"), VariableSpec.categorical("c", ["only"])]
        with pytest.warns(UserWarning):
            d = mixed_design(lhs_sample(specs, 6))
        assert d.names == ["a"]


class TestScaling:
    def test_endpoints_and_midpoint(self):
        spec = VariableSpec.continuous("x", 2.0, 6.0)
        d = scale_inputs(DesignMatrix(np.array([[2.0], [6.0], [4.0]]), [spec]))
        np.testing.assert_array_equal(d.values[:, 0], [-1.0, 1.0, 0.0])
        assert d.scaled

    def test_uses_spec_range_not_data(self):
        spec = VariableSpec.continuous("x", 0.0, 10.0)
        d = scale_inputs(DesignMatrix(np.array([[4.0], [5.0]]), [spec]))
        np.testing.assert_allclose(d.values[:, 0], [-0.2, 0.0])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20))
    def test_roundtrip(self, xs):
        spec = VariableSpec.continuous("x", -50.0, 50.0)
        d = DesignMatrix(np.array(xs)[:, None], [spec])
        back = unscale_inputs(scale_inputs(d))
        np.testing.assert_allclose(back.values, d.values, atol=1e-12)

    def test_categorical_codes(self):
        spec = VariableSpec.categorical("c", list("abc"))
        d = scale_inputs(DesignMatrix(np.array([[0.0], [1.0], [2.0]]), [spec]))
        np.testing.assert_array_equal(d.values[:, 0], [-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(unscale_inputs(d).values[:, 0], [0, 1, 2])

    def test_double_scaling_rejected(self):
        d = scale_inputs(DesignMatrix(np.zeros((2, 1)), [VariableSpec.continuous("x", -1, 1)]))
        with pytest.raises(DesignError):
            scale_inputs(d)


class TestStandardize:
    def test_three_points(self):
        out = standardize_outputs(OutputMatrix(np.array([[1.0], [2.0], [3.0]])))
        np.testing.assert_allclose(out.values[:, 0], [-1.0, 0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(out.column_means, [2.0])
        np.testing.assert_allclose(out.column_sds, [1.0])

    def test_constant_column_named(self):
        Y = OutputMatrix(np.column_stack([np.arange(4.0), np.ones(4)]), names=["a", "flat"])
        with pytest.raises(DesignError, match="flat"):
            standardize_outputs(Y)

    def test_needs_two_rows(self):
        with pytest.raises(DesignError):
            standardize_outputs(OutputMatrix(np.ones((1, 2))))

    @given(st.integers(2, 50), st.integers(1, 4), st.integers(0, 1000))
    def test_moments_and_inverse(self, n, m, seed):
        Y = np.random.default_rng(seed).normal(3.0, 5.0, (n, m))
        out = standardize_outputs(OutputMatrix(Y))
        np.testing.assert_allclose(out.values.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.values.std(axis=0, ddof=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(destandardize(out).values, Y, atol=1e-10)
        again = standardize_outputs(OutputMatrix(out.values))
        np.testing.assert_allclose(again.values, out.values, atol=1e-12)


class TestIO:
    def test_csv_roundtrip_exact(self, tmp_path, rng):
        specs = [VariableSpec.continuous("a", 0, 1), VariableSpec.categorical("c", ["u", "v"])]
        d = mixed_design(lhs_sample(specs, 5, seed=1))
        path = tmp_path / "d.csv"
        write_design_csv(d, path, comment="digest=abc")
        back = read_design_csv(path, specs)
        np.testing.assert_array_equal(back.values, d.values)
        save_specs(specs, tmp_path / "s.json")
        assert load_specs(tmp_path / "s.json") == specs
        assert "variables" in json.loads((tmp_path / "s.json").read_text())

    def test_outputs_csv(self, tmp_path, rng):
        Y = rng.standard_normal((4, 2))
        write_matrix_csv(tmp_path / "y.csv", ["p", "q"], Y)
        out = read_outputs_csv(tmp_path / "y.csv")
        assert out.names == ["p", "q"]
        np.testing.assert_array_equal(out.values, Y)

    def test_unknown_column(self, tmp_path):
        write_matrix_csv(tmp_path / "d.csv", ["zz"], np.zeros((2, 1)))
        with pytest.raises(DesignError, match="zz"):
            read_design_csv(tmp_path / "d.csv", [VariableSpec.continuous("a")])

    def test_non_numeric(self, tmp_path):
        (tmp_path / "d.csv").write_text("a\nfoo\n")
        with pytest.raises(DesignError):
            read_outputs_csv(tmp_path / "d.csv")
