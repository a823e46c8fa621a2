import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from conftest import bohman_ref, dense_product_kernel
from msgp.kernels import (
    KernelError,
    KernelSpec,
    PairSet,
    assemble_sparse_correlation,
    calibrate_cutoff,
    check_simplex,
    corr_bohman,
    corr_matern_wendland,
    corr_power_exponential,
    corr_trunc_power,
    correlation_1d,
    cross_correlation,
    dense_correlation,
    matern52,
    nu_lower_bound,
    wendland,
)

COMPACT = ["bohman", "truncated_power", "matern_wendland"]


class TestScalarFunctions:
    def test_bohman_values(self):
        assert corr_bohman(0.0, 1.0) == 1.0
        assert corr_bohman(1.0, 1.0) == 0.0
        np.testing.assert_allclose(corr_bohman(0.5, 1.0), 1.0 / np.pi, rtol=1e-14)
        assert corr_bohman(2.0, 1.0) == 0.0

    def test_bohman_bad_tau(self):
        with pytest.raises(KernelError):
            corr_bohman(0.1, 0.0)

    def test_trunc_power_values(self):
        assert corr_trunc_power(0.0, 1.0, 1.5, 2.0) == 1.0
        assert corr_trunc_power(1.0, 1.0, 1.5, 2.0) == 0.0
        np.testing.assert_allclose(corr_trunc_power(0.25, 1.0, 1.5, 2.0), 0.765625, rtol=1e-14)

    def test_trunc_power_bounds(self):
        assert nu_lower_bound(1.5) == 2.0
        np.testing.assert_allclose(nu_lower_bound(5 / 3), 3.0)
        assert nu_lower_bound(1.0) == 2.0
        KernelSpec("truncated_power", alpha=5 / 3, nu=3.0)
        with pytest.raises(KernelError, match="nu"):
            KernelSpec("truncated_power", alpha=5 / 3, nu=2.5)
        with pytest.raises(KernelError, match="alpha"):
            KernelSpec("truncated_power", alpha=2.0, nu=50.0)
        with pytest.raises(KernelError):
            KernelSpec("truncated_power", alpha=1.97, nu=100.0)

    def test_matern_wendland_oracle(self):
        # Bessel-form Matern(5/2) times the Wendland function obtained by two
        # numerical integrations of (1 - r)^3, normalized at zero.
        np.testing.assert_allclose(corr_matern_wendland(0.3, 1.0, 1.0, k=2, s=1),
                                   0.5332236067656085, rtol=1e-12)
        assert corr_matern_wendland(0.0, 2.0, 0.7) == 1.0
        assert corr_matern_wendland(0.7, 2.0, 0.7) == 0.0
        assert corr_matern_wendland(1.5, 2.0, 0.7) == 0.0
        with pytest.raises(KernelError):
            corr_matern_wendland(0.1, -1.0, 1.0)

    @given(st.floats(1e-3, 20.0), st.floats(0.1, 5.0))
    def test_matern_matches_bessel(self, t, phi):
        a = t * phi
        ref = 2 ** (1 - 2.5) / special.gamma(2.5) * a ** 2.5 * special.kv(2.5, a)
        np.testing.assert_allclose(matern52(t, phi), ref, rtol=1e-10, atol=1e-300)

    def test_wendland_normalized(self):
        assert wendland(0.0, 3) == 1.0
        assert wendland(1.0, 3) == 0.0

    def test_power_exponential(self):
        assert corr_power_exponential([0.3, 0.1], [0.3, 0.1], [1.0, 2.0]) == 1.0
        np.testing.assert_allclose(corr_power_exponential([1.0, 1.0], [0.0, 0.0], [1.0, 2.0]),
                                   np.exp(-3.0), rtol=1e-14)
        assert corr_power_exponential([1.0], [0.0], [1e6]) == 0.0
        with pytest.raises(KernelError):
            corr_power_exponential([1.0, 2.0], [0.0], [1.0])

    @pytest.mark.parametrize("family", COMPACT)
    def test_range_monotone_compact(self, family):
        spec = KernelSpec(family, alpha=1.7, nu=5.0, phi=2.0)
        t = np.linspace(0.0, 1.5, 601)
        r = correlation_1d(t, 1.0, spec)
        assert r[0] == 1.0
        assert np.all((r >= 0) & (r <= 1))
        assert np.all(np.diff(r[t <= 1.0]) <= 1e-15)
        assert np.all(r[t >= 1.0] == 0.0)

    def test_negative_lag(self):
        with pytest.raises(KernelError):
            corr_bohman(-0.1, 1.0)


class TestKernelSpec:
    def test_roundtrip(self):
        s = KernelSpec("matern_wendland", phi=3.0, omega=0.95, cutoff=2.0)
        assert KernelSpec.from_dict(s.to_dict()) == s

    def test_unknown(self):
        with pytest.raises(KernelError):
            KernelSpec("gauss")
        with pytest.raises(KernelError):
            KernelSpec.from_dict({"family": "bohman", "colour": 1})
        with pytest.raises(KernelError):
            KernelSpec(omega=1.0)

    def test_ell(self):
        assert KernelSpec("matern_wendland", taper_dim=1, taper_k=2).ell == 3
        assert KernelSpec("matern_wendland", taper_dim=4, taper_k=1).ell == 4


class TestCutoff:
    def test_three_collinear_points(self):
        X = np.array([[0.0], [1.0], [2.0]])
        assert calibrate_cutoff(X, 1 / 3) == 2.0

    def test_small_omega_above_max(self):
        X = np.array([[0.0], [1.0], [2.0]])
        c = calibrate_cutoff(X, 0.1)
        assert c > 2.0

    def test_literal_rule(self):
        X = np.array([[0.0], [1.0], [3.0], [7.0]])
        # distances 1, 2, 3, 4, 6, 7
        assert calibrate_cutoff(X, 0.5, "literal") == 3.0
        assert calibrate_cutoff(X, 0.5) == 4.0

    def test_errors(self):
        with pytest.raises(KernelError):
            calibrate_cutoff(np.zeros((1, 2)), 0.5)
        with pytest.raises(KernelError):
            calibrate_cutoff(np.zeros((3, 2)), 1.0)

    @given(st.integers(3, 40), st.integers(1, 4), st.integers(0, 999),
           st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    def test_monotone_in_omega(self, n, p, seed, w1, w2):
        X = np.random.default_rng(seed).uniform(-1, 1, (n, p))
        lo, hi = sorted((w1, w2))
        assert calibrate_cutoff(X, hi) <= calibrate_cutoff(X, lo)

    @given(st.integers(5, 60), st.integers(1, 5), st.integers(0, 999), st.floats(0.05, 0.99))
    def test_zero_fraction_guarantee(self, n, p, seed, omega):
        X = np.random.default_rng(seed).uniform(-1, 1, (n, p))
        c = calibrate_cutoff(X, omega)
        R = assemble_sparse_correlation(X, KernelSpec("bohman", omega=omega), np.full(p, c / p))
        N = n * (n - 1) // 2
        # at least floor(omega * N) pairs lie beyond the cutoff
        assert round(R.zero_fraction() * N) >= np.floor(omega * N)

    def test_n200_zero_fraction(self, rng):
        X = rng.uniform(-1, 1, (200, 4))
        R = assemble_sparse_correlation(X, KernelSpec("bohman", omega=0.9), np.full(4, 0.3))
        assert R.zero_fraction() >= 0.9

    def test_simplex(self):
        check_simplex([0.5, 0.5], 1.0)
        with pytest.raises(KernelError):
            check_simplex([0.6, 0.5], 1.0)
        with pytest.raises(KernelError):
            check_simplex([0.0, 0.5], 1.0)


class TestAssembly:
    @pytest.mark.parametrize("family", COMPACT)
    def test_sparse_equals_dense(self, family, rng):
        X = rng.uniform(-1, 1, (50, 3))
        spec = KernelSpec(family, omega=0.9, phi=1.5)
        c = calibrate_cutoff(X, 0.9)
        tau = np.array([0.5, 0.3, 0.2]) * c
        S = assemble_sparse_correlation(X, spec, tau).toarray()
        D = dense_correlation(X, spec, tau)
        np.testing.assert_allclose(S, D, atol=1e-14, rtol=0)
        assert np.all(np.diag(S) == 1.0 + spec.nugget)

    def test_bohman_against_reference(self, rng):
        X = rng.uniform(-1, 1, (40, 2))
        tau = np.array([0.6, 0.9])
        D = dense_product_kernel(X, tau, bohman_ref)
        S = assemble_sparse_correlation(X, KernelSpec("bohman", nugget=0.0), tau, cutoff=2.0)
        A = S.toarray()
        np.testing.assert_allclose(A, D, atol=1e-14)
        stored = S.to_scipy().toarray() != 0
        assert np.all(D[~stored] == 0.0)

    def test_unstored_beyond_support(self):
        X = np.array([[0.0, 0.0], [0.5, 0.0], [0.05, 0.05]])
        S = assemble_sparse_correlation(X, KernelSpec("bohman"), [0.4, 0.4], cutoff=1.0)
        L = S.lower().toarray()
        assert L[1, 0] == 0.0 and L[2, 0] != 0.0
        assert S.nnz_offdiag == 1

    def test_tau_outside_simplex(self, rng):
        X = rng.uniform(-1, 1, (10, 2))
        with pytest.raises(KernelError):
            assemble_sparse_correlation(X, KernelSpec("bohman"), [1.0, 1.0], cutoff=1.5)

    def test_power_exponential_dense(self, rng):
        X = rng.uniform(-1, 1, (6, 2))
        tau = np.array([0.7, 1.3])
        D = dense_correlation(X, KernelSpec("power_exponential", nugget=0.0), tau)
        for i in range(6):
            for j in range(6):
                np.testing.assert_allclose(
                    D[i, j], corr_power_exponential(X[i], X[j], 1.0 / tau**2), rtol=1e-13)

    @pytest.mark.parametrize("family", COMPACT + ["power_exponential"])
    def test_cross_correlation_consistent(self, family, rng):
        X = rng.uniform(-1, 1, (30, 3))
        spec = KernelSpec(family, nugget=0.0)
        tau = np.array([0.8, 0.5, 0.6])
        C = cross_correlation(X[:10], X, spec, tau, dense=True)
        D = dense_correlation(X, spec, tau)
        np.testing.assert_allclose(C, D[:10], atol=1e-13)

    def test_pairset_superset(self, rng):
        X = rng.uniform(-1, 1, (60, 3))
        c = calibrate_cutoff(X, 0.8)
        ps = PairSet.build(X, c)
        spec = KernelSpec("bohman")
        S = assemble_sparse_correlation(X, spec, np.full(3, c / 3), cutoff=c)
        assert S.nnz_offdiag <= ps.size


@pytest.mark.parametrize("family,alpha,nu", [
    ("bohman", 1.5, 2.0),
    ("truncated_power", 1.5, 2.0),
    ("truncated_power", 5 / 3, 3.0),
    ("truncated_power", 1.9, 10.0),
    ("matern_wendland", 1.5, 2.0),
])
@given(n=st.integers(2, 120), p=st.integers(1, 5), seed=st.integers(0, 10**6),
       frac=st.floats(0.2, 1.0))
def test_positive_semidefinite(family, alpha, nu, n, p, seed, frac):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, p))
    w = rng.dirichlet(np.ones(p))
    tau = np.maximum(frac * p * w, 1e-3)
    spec = KernelSpec(family, alpha=alpha, nu=nu, phi=2.0, nugget=0.0)
    R = dense_correlation(X, spec, tau)
    assert np.linalg.eigvalsh(R).min() >= -1e-8
