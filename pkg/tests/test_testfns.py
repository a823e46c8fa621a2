import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from msgp.sensitivity import saltelli_oracle
from msgp.testfns import (
    G_FUNCTION_A,
    DomainError,
    arctan_temporal,
    get_test_function,
    sobol_g,
    sobol_g_oracle,
    time_grid,
)

# first-order and total indices for a = (0, 1, 4.5, 9, 99 x 4) by numerical
# integration of the conditional variances
G_S = [0.7161921688790325, 0.17904804221975837, 0.023675774177819485,
       0.007161921688790487] + [7.161921688789533e-05] * 4
G_ST = [0.7871441266592742, 0.24219819281823854, 0.034316910154083134,
        0.010460387065239763] + [0.00010494905191949434] * 4


class TestSobolG:
    def test_examples(self):
        assert sobol_g(np.full(8, 0.5)) == 0.0
        assert sobol_g(np.zeros(5), np.zeros(5)) == 32.0
        a = np.array([1.0, 4.5])
        np.testing.assert_allclose(sobol_g([0.5, 0.5], a), np.prod(a / (1 + a)))

    def test_unit_mean(self):
        x = np.random.default_rng(0).random((1_000_000, 8))
        assert abs(sobol_g(x).mean() - 1.0) < 0.01

    @given(arrays(float, 8, elements=st.floats(0, 1)))
    def test_reflection_symmetry(self, x):
        np.testing.assert_allclose(sobol_g(x), sobol_g(1.0 - x), rtol=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            sobol_g(np.full(8, 1.1))
        with pytest.raises(DomainError):
            sobol_g(np.zeros(3), [1.0, 2.0])
        with pytest.raises(DomainError):
            sobol_g(np.zeros(2), [1.0, -2.0])


class TestGOracle:
    def test_frozen_values(self):
        S, ST = sobol_g_oracle()
        np.testing.assert_allclose(S, G_S, rtol=1e-12)
        np.testing.assert_allclose(ST, G_ST, rtol=1e-12)

    def test_limits(self):
        S, ST = sobol_g_oracle([0.0])
        np.testing.assert_allclose([S[0], ST[0]], [1.0, 1.0])
        S, _ = sobol_g_oracle([0.0, 1e8])
        assert S[1] < 1e-15

    @given(arrays(float, st.integers(1, 8), elements=st.floats(0, 100)))
    def test_first_below_total(self, a):
        S, ST = sobol_g_oracle(a)
        assert np.all(S <= ST + 1e-15)
        assert S.sum() <= 1 + 1e-12

    def test_monte_carlo_agreement(self):
        f = get_test_function("sobol-g")
        _, ind = saltelli_oracle(f.scaled, 8, 1_000_000, seed=1)
        np.testing.assert_allclose(ind["S"][:, 0], G_S, atol=0.01)
        np.testing.assert_allclose(ind["ST"][:, 0], G_ST, atol=0.01)


class TestArctan:
    def test_grid(self):
        t = time_grid(100)
        assert t[0] == 0.0 and t.size == 100 and t[-1] < 2 * np.pi
        np.testing.assert_allclose(t[25], np.pi / 2, rtol=1e-15)
        with pytest.raises(DomainError):
            time_grid(1)

    def test_examples(self):
        np.testing.assert_array_equal(arctan_temporal([0.0, 0.0]), np.zeros(100))
        y = arctan_temporal([1.5, -3.0])
        np.testing.assert_allclose(y[0], np.arctan(1.5), rtol=1e-15)
        np.testing.assert_allclose(y[25], np.arctan(-3.0), rtol=1e-14)

    @given(arrays(float, (5, 2), elements=st.floats(-7, 7)))
    def test_bounded(self, x):
        y = arctan_temporal(x)
        assert y.shape == (5, 100)
        assert np.all(np.abs(y) <= np.sqrt(2) * np.arctan(7.0) + 1e-12)
        assert np.sqrt(2) * np.arctan(7.0) < 2.1

    def test_domain(self):
        with pytest.raises(DomainError):
            arctan_temporal([8.0, 0.0])
        with pytest.raises(DomainError):
            arctan_temporal([0.0, 0.0, 0.0])

    def test_symmetric_generalized_indices(self):
        f = get_test_function("arctan")
        _, ind = saltelli_oracle(f.scaled, 2, 50_000, seed=2)
        np.testing.assert_allclose(ind["S_trace"], [0.5, 0.5], atol=0.03)
        assert abs(ind["S_trace"][0] - ind["S_trace"][1]) < 0.05


class TestRegistry:
    def test_lookup(self):
        g = get_test_function("sobol-g")
        assert (g.p, g.m) == (8, 1)
        np.testing.assert_allclose(g.from_scaled(np.zeros(8)), np.full(8, 0.5))
        assert g.scaled(np.zeros((3, 8))).shape == (3, 1)
        a = get_test_function("arctan-temporal", q=10)
        assert (a.p, a.m) == (2, 10)
        np.testing.assert_allclose(a.from_scaled([1.0, -1.0]), [7.0, -7.0])
        assert tuple(G_FUNCTION_A) == (0, 1, 4.5, 9, 99, 99, 99, 99)
        with pytest.raises(DomainError):
            get_test_function("ishigami")
