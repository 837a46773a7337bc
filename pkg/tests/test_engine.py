"""Tests for mosaic residuals, randomization and the permutation test."""

import numpy as np
import pytest

from mosaic_panel.engine import (
    SignAssignment,
    StatWeights,
    _QuadraticRandomization,
    default_weights,
    delta_matrix,
    delta_pair,
    enumerate_signs,
    exact_pvalue,
    mosaic_randomize,
    mosaic_resid,
    mosaic_test,
    permutation_pvalue,
    quadratic_stat,
)
from mosaic_panel.exceptions import InvalidReplicates
from mosaic_panel.invariance import make_invariance
from mosaic_panel.panel import Clustering, PanelData
from mosaic_panel.simlab import DgpSpec, gen_panel


def _panel(N=12, T=6, D=1, M=4, seed=0):
    rng = np.random.default_rng(seed)
    clustering = Clustering(np.arange(N) % M, M)
    return PanelData(rng.standard_normal((N, T)), rng.standard_normal((D, N, T)), clustering)


def _singletons(rows):
    rows = np.asarray(rows, dtype=float)
    return Clustering.singletons(rows.shape[0]), rows


class TestMosaicResid:
    def test_exact_fit_zero(self):
        p = _panel(D=2)
        Y = 3.0 * p.X[0] - p.X[1]
        mr = mosaic_resid(p.with_outcome(Y), make_invariance("time-reversal", p.T))
        np.testing.assert_allclose(mr.residuals, 0.0, atol=1e-12)

    def test_no_covariates_is_identity(self):
        p = _panel(D=0)
        mr = mosaic_resid(p, make_invariance("local-exchangeability", p.T))
        np.testing.assert_array_equal(mr.residuals, p.Y)

    def test_blocks_match_fits(self):
        p = _panel()
        mr = mosaic_resid(p, make_invariance("local-exchangeability", p.T))
        for fit in mr.fits:
            np.testing.assert_array_equal(mr.residuals[p.clustering.members(fit.cluster)], fit.residuals)

    def test_transforming_one_cluster(self):
        p = _panel(N=16, T=8, D=2, seed=3)
        P = make_invariance("local-exchangeability", p.T)
        base = mosaic_resid(p, P).residuals
        rows = p.clustering.members(2)
        Y = p.Y.copy()
        Y[rows] = P.apply(Y[rows])
        got = mosaic_resid(p.with_outcome(Y), P).residuals
        want = base.copy()
        want[rows] = P.apply(base[rows])
        assert np.linalg.norm(got - want) <= 1e-8 * np.linalg.norm(base)


class TestRandomize:
    def setup_method(self):
        self.p = _panel()
        self.P = make_invariance("local-exchangeability", self.p.T)
        self.mr = mosaic_resid(self.p, self.P)

    def test_no_flips(self):
        out = mosaic_randomize(self.mr, self.P, np.zeros(4, dtype=bool))
        np.testing.assert_array_equal(out, self.mr.residuals)

    def test_all_flips(self):
        out = mosaic_randomize(self.mr, self.P, np.ones(4, dtype=bool))
        np.testing.assert_array_equal(out, self.P.apply(self.mr.residuals))

    def test_two_clusters_symmetry(self):
        c = Clustering(np.array([0, 0, 1]), 2)
        E = np.arange(6.0).reshape(3, 2)
        out = mosaic_randomize(E, make_invariance("symmetry", 2), SignAssignment([True, False]), c)
        np.testing.assert_array_equal(out, [[0, -1], [-2, -3], [4, 5]])

    def test_sign_count_checked(self):
        with pytest.raises(ValueError):
            mosaic_randomize(self.mr, self.P, np.ones(3, dtype=bool))

    def test_sign_assignment_z(self):
        np.testing.assert_array_equal(SignAssignment([1, 0, 1]).Z, [1, -1, 1])


class TestWeights:
    def test_two_singletons(self):
        w = default_weights(Clustering.singletons(2))
        np.testing.assert_array_equal(w.s, [[0, 1], [1, 0]])

    def test_pairs_of_two(self):
        w = default_weights(Clustering(np.array([0, 0, 1, 1]), 2))
        assert np.all(w.s[:2, 2:] == 0.5)
        assert np.sum(w.s[:2, 2:] ** 2) == 1.0

    def test_three_equal_clusters(self):
        k = 3
        c = Clustering(np.repeat(np.arange(3), k), 3)
        w = default_weights(c)
        for m in range(3):
            for m2 in range(3):
                block = w.s[np.ix_(c.members(m), c.members(m2))]
                np.testing.assert_allclose(block, 0.0 if m == m2 else 1.0 / k)

    def test_rejects_unnormalized(self):
        c = Clustering(np.array([0, 0, 1]), 2)
        s = np.zeros((3, 3))
        s[:2, 2] = s[2, :2] = 1.0
        with pytest.raises(ValueError, match="sum to 1"):
            StatWeights(s, c)

    def test_rejects_within_cluster(self):
        c = Clustering.singletons(2)
        with pytest.raises(ValueError, match="within"):
            StatWeights(np.ones((2, 2)), c)


class TestQuadraticStat:
    def test_hand_value(self):
        c, E = _singletons([[1, 0], [1, 1]])
        assert quadratic_stat(E, default_weights(c)) == 2.0

    def test_zero_residuals(self):
        c = Clustering(np.array([0, 1, 1]), 2)
        assert quadratic_stat(np.zeros((3, 4)), default_weights(c)) == 0.0

    def test_orthogonal_rows(self):
        c, E = _singletons([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        assert quadratic_stat(E, default_weights(c)) == 0.0


class TestDelta:
    def test_hand_value(self):
        c, E = _singletons([[1, 0], [1, 0]])
        P = make_invariance("local-exchangeability", 2)
        assert delta_pair(E, default_weights(c), P, 0, 1) == 1.0

    def test_fixed_rows_give_zero(self):
        c, E = _singletons([[1, 1], [2, 2], [3, 3]])
        P = make_invariance("local-exchangeability", 2)
        np.testing.assert_array_equal(delta_matrix(E, default_weights(c), P), 0.0)

    @pytest.mark.parametrize("kind", ["symmetry", "time-reversal", "local-exchangeability"])
    @pytest.mark.parametrize("M", [2, 4, 6])
    def test_decomposition_by_enumeration(self, kind, M):
        p = _panel(N=3 * M, T=5, M=M, seed=M)
        P = make_invariance(kind, p.T)
        mr = mosaic_resid(p, P)
        w = default_weights(p.clustering)
        # Oracle: brute-force mean over every sign pattern, no shortcut.
        vals = [quadratic_stat(mosaic_randomize(mr, P, b), w) for b in enumerate_signs(M)]
        dsum = sum(delta_pair(mr.residuals, w, P, m, m2) for m in range(M) for m2 in range(m + 1, M))
        S = quadratic_stat(mr.residuals, w)
        assert abs((S - np.mean(vals)) - dsum) <= 1e-8 * (1 + abs(S))

    def test_fast_path_matches_direct(self):
        p = _panel(N=20, T=6, M=5, seed=9)
        P = make_invariance("local-exchangeability", p.T)
        mr = mosaic_resid(p, P)
        w = default_weights(p.clustering)
        quad = _QuadraticRandomization(mr.residuals, w, P)
        B = enumerate_signs(5)
        fast = quad(2.0 * B - 1.0)
        direct = np.array([quadratic_stat(mosaic_randomize(mr, P, b), w) for b in B])
        np.testing.assert_allclose(fast, direct, rtol=0, atol=1e-10 * np.abs(direct).max())

    def test_delta_matrix_matches_pairs(self):
        p = _panel(N=12, T=4, M=4, seed=1)
        P = make_invariance("time-reversal", 4)
        E = mosaic_resid(p, P).residuals
        w = default_weights(p.clustering)
        dm = delta_matrix(E, w, P)
        for m in range(4):
            for m2 in range(m + 1, 4):
                assert abs(dm[m, m2] - delta_pair(E, w, P, m, m2)) < 1e-12


class TestPvalue:
    def test_formula(self):
        assert permutation_pvalue(1.0, np.array([0.0, 1.0, 2.0])) == 0.75

    def test_noiseless_panel_gives_one(self):
        p = _panel(D=1)
        res = mosaic_test(p.with_outcome(2.0 * p.X[0]), make_invariance("local-exchangeability", p.T), R=99, seed=1)
        assert res.p_value == 1.0

    def test_rejects_bad_r(self):
        p = _panel()
        with pytest.raises(InvalidReplicates):
            mosaic_test(p, make_invariance("symmetry", p.T), R=0)

    def test_deterministic(self):
        p = _panel(N=20, M=5)
        P = make_invariance("local-exchangeability", p.T)
        a = mosaic_test(p, P, R=199, seed=42)
        b = mosaic_test(p, P, R=199, seed=42)
        assert a.p_value == b.p_value and a.observed == b.observed
        np.testing.assert_array_equal(a.randomized, b.randomized)
        assert a.to_dict() == {"p_value": a.p_value, "statistic": a.observed, "R": 199, "seed": 42}

    def test_prefix_of_longer_run(self):
        p = _panel(N=20, M=5)
        P = make_invariance("local-exchangeability", p.T)
        short = mosaic_test(p, P, R=50, seed=3)
        long = mosaic_test(p, P, R=200, seed=3)
        np.testing.assert_array_equal(short.randomized, long.randomized[:50])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_mc_close_to_enumeration(self, seed):
        p = _panel(N=4, T=6, D=1, M=4, seed=seed)
        P = make_invariance("local-exchangeability", p.T)
        exact = exact_pvalue(mosaic_resid(p, P), P)
        R = 2000
        mc = mosaic_test(p, P, R=R, seed=seed).p_value
        assert abs(mc - exact) <= 3 * np.sqrt(exact * (1 - exact) / R) + 1.0 / (R + 1)

    def test_custom_statistic_matches_quadratic(self):
        p = _panel(N=16, M=4, seed=5)
        P = make_invariance("local-exchangeability", p.T)
        w = default_weights(p.clustering)
        fast = mosaic_test(p, P, R=100, seed=8)
        slow = mosaic_test(p, P, statistic=lambda E: quadratic_stat(E, w), R=100, seed=8)
        assert abs(fast.observed - slow.observed) < 1e-10
        np.testing.assert_allclose(slow.randomized, fast.randomized, atol=1e-10)

    def test_two_sided_uses_absolute_value(self):
        p = _panel(N=16, M=4, seed=6)
        P = make_invariance("local-exchangeability", p.T)
        one = mosaic_test(p, P, R=100, seed=8)
        two = mosaic_test(p, P, R=100, seed=8, two_sided=True)
        assert two.observed == abs(one.observed)
        np.testing.assert_array_equal(two.randomized, np.abs(one.randomized))

    def test_exact_pvalue_custom_statistic(self):
        p = _panel(N=8, M=4, seed=2)
        P = make_invariance("time-reversal", p.T)
        mr = mosaic_resid(p, P)
        w = default_weights(p.clustering)
        a = exact_pvalue(mr, P)
        b = exact_pvalue(mr, P, statistic=lambda E: quadratic_stat(E, w))
        assert abs(a - b) <= 2.0 / 16  # at most a tie or two resolved differently


class TestNullCalibration:
    @pytest.mark.slow
    def test_exact_enumeration_is_super_uniform(self):
        # Exact p-values under a jointly invariant null with M = 8.
        n = 400
        alphas = np.array([0.05, 0.1, 0.2, 0.5])
        P = make_invariance("local-exchangeability", 10)
        ps = []
        for i in range(n):
            sim = gen_panel(DgpSpec(N=16, T=10, M=8, family="locally-exchangeable", seed=i))
            ps.append(exact_pvalue(mosaic_resid(sim.panel, P), P))
        ps = np.array(ps)
        for a in alphas:
            assert np.mean(ps <= a) <= a + 3 * np.sqrt(a * (1 - a) / n)
