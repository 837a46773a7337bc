"""Tests for mosaic intervals and the OLS comparators."""

import warnings

import numpy as np
import pytest
import statsmodels.api as sm

from mosaic_panel.engine import mosaic_randomize
from mosaic_panel.exceptions import InvalidAlpha, NoLocalVariation, RankDeficient
from mosaic_panel.inference import (
    _local_contrast,
    _replicates,
    ci_endpoints,
    covariate_residuals,
    inversion_accepts,
    mosaic_beta,
    mosaic_ci,
    mosaic_se,
    ols_panel,
    quantile_indices,
    replicate_terms_direct,
)
from mosaic_panel.invariance import make_invariance
from mosaic_panel.panel import Clustering
from mosaic_panel.rng import sign_bits
from mosaic_panel.simlab import DgpSpec, gen_panel


def _data(N=30, T=6, D=2, M=6, seed=0, beta=1.5, noise=1.0):
    rng = np.random.default_rng(seed)
    clustering = Clustering(np.arange(N) % M, M)
    X = rng.standard_normal((D, N, T))
    Z = rng.standard_normal((N, T)) + 0.3 * X[0]
    Y = beta * Z + X.sum(axis=0) + noise * rng.standard_normal((N, T))
    return Y, Z, X, clustering


class TestMosaicBeta:
    def test_noiseless_identification(self):
        Y, Z, X, c = _data(noise=0.0)
        est = mosaic_beta(Y, Z, X, c, make_invariance("local-exchangeability", 6))
        assert abs(est.beta_hat - 1.5) < 1e-8

    def test_no_local_variation(self):
        Y, Z, X, c = _data()
        X = np.concatenate([X, Z[None]])
        with pytest.raises(NoLocalVariation):
            mosaic_beta(Y, Z, X, c, make_invariance("local-exchangeability", 6))

    def test_time_constant_covariate_has_no_variation(self):
        Y, _, X, c = _data()
        Z = np.repeat(np.arange(30.0)[:, None], 6, axis=1)
        with pytest.raises(NoLocalVariation):
            mosaic_beta(Y, Z, None, c, make_invariance("time-reversal", 6))

    @pytest.mark.parametrize("shift", [-3.0, 0.25, 10.0])
    def test_shift(self, shift):
        Y, Z, X, c = _data(seed=2)
        P = make_invariance("local-exchangeability", 6)
        a = mosaic_beta(Y, Z, X, c, P).beta_hat
        b = mosaic_beta(Y + shift * Z, Z, X, c, P).beta_hat
        assert abs(b - a - shift) < 1e-10 * (1 + abs(shift))


class TestAngles:
    @pytest.mark.parametrize("kind", ["symmetry", "time-reversal", "local-exchangeability"])
    def test_angle_identities_every_replicate(self, kind):
        Y, Z, X, c = _data(seed=3)
        P = make_invariance(kind, 6)
        A = covariate_residuals(Z, X, c, P)
        D = _local_contrast(A, P)
        dd = np.sum(D * D)
        assert abs(np.sum(A * D) - dd) <= 1e-8 * dd
        for b in sign_bits(4, 50, c.M):
            At = mosaic_randomize(A, P, b, c)
            Dt = mosaic_randomize(D, P, b, c)
            assert abs(np.sum(At * D) - np.sum(Dt * D)) <= 1e-8 * dd
            assert abs(np.sum(Dt * Dt) - dd) <= 1e-10 * dd

    def test_closed_form_rho_matches_direct(self):
        Y, Z, X, c = _data(seed=5)
        P = make_invariance("local-exchangeability", 6)
        est = mosaic_beta(Y, Z, X, c, P)
        B = sign_bits(9, 40, c.M)
        rho, beta_t, _, _ = _replicates(est.D, est.eps_hat, c, est.beta_hat, B)
        for r in range(B.shape[0]):
            rho_d, bt_d = replicate_terms_direct(est.D, est.eps_hat, c, P, B[r])
            assert abs(rho[r] - rho_d) < 1e-10
            assert abs(beta_t[r] - bt_d) < 1e-10 * (1 + abs(bt_d))


class TestQuantiles:
    def test_indices(self):
        assert quantile_indices(999, 0.05) == (25, 975)
        assert quantile_indices(19, 0.1) == (1, 19)

    def test_small_r_warns_and_clamps(self):
        with pytest.warns(UserWarning, match="too small"):
            assert quantile_indices(9, 0.05) == (1, 9)

    def test_degenerate_replicates_are_outermost(self):
        vals = np.array([0.0, -1.0, 2.0, 0.5])
        deg = np.array([True, False, False, False])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lo, hi = ci_endpoints(1.0, vals, deg, 0.5)
        assert (lo, hi) == (-np.inf, np.inf)

    def test_bad_alpha(self):
        with pytest.raises(InvalidAlpha):
            ci_endpoints(0.0, np.zeros(5), np.zeros(5, dtype=bool), 1.0)


class TestMosaicSe:
    def test_zero(self):
        assert mosaic_se(np.zeros(10)) == 0.0

    def test_two_point(self):
        assert mosaic_se(np.array([-1.0, 1.0])) == pytest.approx(np.sqrt(2.0))


class TestMosaicCi:
    def test_noiseless_degenerate_interval(self):
        Y, Z, X, c = _data(noise=0.0, seed=1)
        ci = mosaic_ci(Y, Z, X, c, make_invariance("local-exchangeability", 6), R=199, seed=1)
        assert abs(ci.lower - 1.5) < 1e-8 and abs(ci.upper - 1.5) < 1e-8
        np.testing.assert_allclose(ci.replicate_values, 0.0, atol=1e-8)

    def test_interval_ordering(self):
        Y, Z, X, c = _data(seed=4)
        ci = mosaic_ci(Y, Z, X, c, make_invariance("local-exchangeability", 6), R=499, seed=2)
        assert ci.lower <= ci.beta_hat <= ci.upper
        lo90, hi90 = ci.interval(0.2)
        assert ci.lower <= lo90 <= hi90 <= ci.upper

    def test_deterministic(self):
        Y, Z, X, c = _data(seed=4)
        P = make_invariance("local-exchangeability", 6)
        a = mosaic_ci(Y, Z, X, c, P, R=99, seed=5)
        b = mosaic_ci(Y, Z, X, c, P, R=99, seed=5)
        assert a.to_dict() == b.to_dict()

    @pytest.mark.parametrize("shift", [-2.0, 0.7, 40.0])
    def test_shift_equivariance(self, shift):
        Y, Z, X, c = _data(seed=6)
        P = make_invariance("local-exchangeability", 6)
        a = mosaic_ci(Y, Z, X, c, P, R=299, seed=3)
        b = mosaic_ci(Y + shift * Z, Z, X, c, P, R=299, seed=3)
        for u, v in ((a.lower, b.lower), (a.upper, b.upper), (a.beta_hat, b.beta_hat)):
            assert abs(v - (u + shift)) <= 1e-8 * max(1.0, abs(u + shift))

    @pytest.mark.parametrize("kind", ["symmetry", "local-exchangeability"])
    def test_inversion_agrees_on_grid(self, kind):
        Y, Z, X, c = _data(N=24, M=6, seed=8)
        P = make_invariance(kind, 6)
        R, alpha, seed = 199, 0.1, 11
        ci = mosaic_ci(Y, Z, X, c, P, alpha=alpha, R=R, seed=seed)
        w = ci.upper - ci.lower
        grid = np.linspace(ci.lower - 0.6 * w, ci.upper + 0.6 * w, 21)
        for b in grid:
            inside = ci.lower <= b <= ci.upper
            assert inversion_accepts(Y, Z, X, c, P, b, alpha, R, seed) == inside

    def test_replicate_mean_near_zero(self):
        sim = gen_panel(DgpSpec(N=60, T=10, M=12, family="locally-exchangeable", seed=3))
        p = sim.panel
        ci = mosaic_ci(p.Y, p.X[0], None, p.clustering, make_invariance("local-exchangeability", 10), R=2000, seed=4)
        vals = ci.replicate_values[~ci.degenerate]
        assert abs(vals.mean()) < 3 * vals.std(ddof=1) / np.sqrt(vals.size)


class TestOls:
    def test_matches_statsmodels(self):
        Y, Z, X, c = _data(N=40, M=8, seed=9)
        res = ols_panel(Y, Z, X, c)
        W = np.column_stack([Z.ravel(), X.reshape(2, -1).T])
        groups = np.repeat(c.assignment, Y.shape[1])
        fit_h = sm.OLS(Y.ravel(), W).fit()
        fit_c = sm.OLS(Y.ravel(), W).fit(cov_type="cluster", cov_kwds={"groups": groups})
        assert res.beta == pytest.approx(fit_h.params[0], rel=1e-10)
        assert res.se_homoskedastic == pytest.approx(fit_h.bse[0], rel=1e-10)
        assert res.se_cluster_robust == pytest.approx(fit_c.bse[0], rel=1e-10)

    def test_drops_collinear_controls(self):
        Y, Z, X, c = _data(seed=1)
        X2 = np.concatenate([X, (X[0] + X[1])[None]])
        a, b = ols_panel(Y, Z, X, c), ols_panel(Y, Z, X2, c)
        assert a.beta == pytest.approx(b.beta, rel=1e-9)
        assert a.se_cluster_robust == pytest.approx(b.se_cluster_robust, rel=1e-9)

    def test_perfect_fit(self):
        Y, Z, X, c = _data(noise=0.0)
        res = ols_panel(Y - X.sum(axis=0), Z, None, c)
        assert res.se_homoskedastic < 1e-12 and res.se_cluster_robust < 1e-12

    def test_collinear_z(self):
        Y, Z, X, c = _data()
        with pytest.raises(RankDeficient):
            ols_panel(Y, Z, np.concatenate([X, 2 * Z[None]]), c)

    def test_iid_errors_agree(self):
        rng = np.random.default_rng(0)
        N, T, M = 400, 10, 40
        c = Clustering(np.arange(N) % M, M)
        Z = rng.standard_normal((N, T))
        res = ols_panel(Z + rng.standard_normal((N, T)), Z, None, c)
        assert abs(res.se_cluster_robust / res.se_homoskedastic - 1) < 0.15

    def test_equicorrelation_inflates_cluster_se(self):
        rng = np.random.default_rng(1)
        N, T, M = 200, 10, 20
        c = Clustering(np.arange(N) // 10, M)
        shock = rng.standard_normal(M)[c.assignment][:, None]
        Z = rng.standard_normal((N, T)) + rng.standard_normal(M)[c.assignment][:, None]
        eps = 0.3 * rng.standard_normal((N, T)) + shock
        res = ols_panel(Z + eps, Z, None, c)
        assert res.se_cluster_robust > res.se_homoskedastic
