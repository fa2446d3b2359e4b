import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covalign import stats


class TestPermutationTest:
    def test_five_uniform_improvements_exact(self):
        # Only the identity sign assignment reaches the observed mean:
        # p is exactly 1/32.
        a = np.array([0.7, 0.8, 0.6, 0.9, 0.75])
        b = a - 0.1
        assert stats.permutation_paired_ttest(a, b) == pytest.approx(1.0 / 32.0, abs=0)

    def test_nine_subject_domination_exact(self):
        rng = np.random.default_rng(0)
        b = rng.uniform(0.5, 0.8, size=9)
        a = b + rng.uniform(0.02, 0.1, size=9)
        assert stats.permutation_paired_ttest(a, b) == pytest.approx(1.0 / 512.0, abs=0)

    def test_identical_samples_give_p_one(self):
        a = np.array([0.5, 0.6, 0.7, 0.8])
        assert stats.permutation_paired_ttest(a, a) == 1.0

    def test_exhaustive_is_seed_independent(self):
        a = np.array([0.7, 0.6, 0.8, 0.9, 0.5, 0.75])
        b = a[::-1]
        p1 = stats.permutation_paired_ttest(a, b, rng_seed=1)
        p2 = stats.permutation_paired_ttest(a, b, rng_seed=999)
        assert p1 == p2

    def test_monte_carlo_matches_exhaustive_within_3se(self):
        # n = 16 is past the exhaustive switch; enumerate the 65536 sign
        # patterns here as the ground truth.
        rng = np.random.default_rng(42)
        d = rng.normal(0.03, 0.05, size=16)
        a = rng.uniform(0.5, 0.9, size=16)
        b = a - d
        n = 16
        bits = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
        signs = 1.0 - 2.0 * bits
        exact_stats = signs @ d / n
        p_exact = float(np.mean(exact_stats >= d.mean() - 1e-12))
        n_perm = 20000
        p_mc = stats.permutation_paired_ttest(a, b, n_perm=n_perm, rng_seed=7)
        se = np.sqrt(p_exact * (1 - p_exact) / n_perm)
        assert abs(p_mc - p_exact) <= 3 * se

    def test_monte_carlo_deterministic_for_seed(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0.5, 0.9, size=20)
        b = rng.uniform(0.5, 0.9, size=20)
        p1 = stats.permutation_paired_ttest(a, b, n_perm=5000, rng_seed=3)
        p2 = stats.permutation_paired_ttest(a, b, n_perm=5000, rng_seed=3)
        assert p1 == p2

    def test_monte_carlo_floor(self):
        # The identity assignment is always in the sample: p >= 1/n_perm.
        a = np.full(20, 0.9)
        b = np.full(20, 0.5) + np.arange(20) * 1e-4
        p = stats.permutation_paired_ttest(a, b, n_perm=1000, rng_seed=0)
        assert p >= 1.0 / 1000.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            stats.permutation_paired_ttest([1.0, 2.0], [1.0, 2.0, 3.0])

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(st.integers(-8, 8), min_size=3, max_size=8),
        st.lists(st.integers(1, 4), min_size=3, max_size=8),
    )
    def test_improving_a_never_raises_p(self, diffs, bumps):
        # Grid-valued data so float ties cannot flicker across the threshold.
        n = min(len(diffs), len(bumps))
        b = np.zeros(n)
        a = np.array(diffs[:n], dtype=float) / 16.0
        a_plus = a + np.array(bumps[:n], dtype=float) / 16.0
        p = stats.permutation_paired_ttest(a, b)
        p_plus = stats.permutation_paired_ttest(a_plus, b)
        assert p_plus <= p

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_two_sided_coverage(self, seed):
        rng = np.random.default_rng(seed)
        a = np.round(rng.uniform(0.4, 0.95, size=6), 3)
        b = np.round(rng.uniform(0.4, 0.95, size=6), 3)
        p_ab = stats.permutation_paired_ttest(a, b)
        p_ba = stats.permutation_paired_ttest(b, a)
        assert 0.0 < p_ab <= 1.0 and 0.0 < p_ba <= 1.0
        # the two one-tailed tests overlap exactly on ties
        assert p_ab + p_ba >= 1.0


class TestEffectSize:
    def test_frozen_case(self):
        # diffs (0.2, 0.1, 0.3): mean 0.2, sd 0.1 -> SMD 2.0
        a = np.array([0.9, 0.7, 0.8])
        b = np.array([0.7, 0.6, 0.5])
        assert stats.standardized_mean_difference(a, b) == pytest.approx(2.0, abs=1e-12)

    def test_constant_difference_rejected(self):
        a = np.array([0.5, 0.6, 0.7])
        with pytest.raises(stats.ZeroVarianceError):
            stats.standardized_mean_difference(a + 0.1, a)

    def test_sign_flips_with_order(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0.6, 0.9, 10)
        b = a - rng.uniform(0.01, 0.2, 10)
        assert stats.standardized_mean_difference(a, b) == pytest.approx(
            -stats.standardized_mean_difference(b, a)
        )


class TestPearson:
    def test_frozen_case(self):
        got = stats.pearson_corr([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
        assert got == pytest.approx(0.98198, abs=1e-5)

    def test_perfect_linear(self):
        x = np.arange(10.0)
        assert stats.pearson_corr(x, 3.0 * x - 1.0) == pytest.approx(1.0, abs=1e-12)
        assert stats.pearson_corr(x, -2.0 * x + 5.0) == pytest.approx(-1.0, abs=1e-12)

    def test_constant_input_rejected(self):
        with pytest.raises(stats.ZeroVarianceError):
            stats.pearson_corr([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_bounded(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            r = stats.pearson_corr(rng.standard_normal(8), rng.standard_normal(8))
            assert -1.0 <= r <= 1.0


class TestSignificanceMatrix:
    def _pipelines(self):
        subjects = range(1, 7)
        base = {s: 0.6 + 0.03 * s for s in subjects}
        better = {s: v + 0.05 for s, v in base.items()}
        noisy = {s: 0.6 + 0.04 * ((s * 7) % 5) for s in subjects}
        return {"base": base, "better": better, "noisy": noisy}

    def test_shapes_and_names(self):
        m = stats.significance_matrix(self._pipelines())
        assert m.pipelines == ("base", "better", "noisy")
        assert m.p.shape == (3, 3) and m.smd.shape == (3, 3)

    def test_self_comparison_convention(self):
        m = stats.significance_matrix(self._pipelines())
        for i in range(3):
            assert m.p[i, i] >= 0.5
            assert m.smd[i, i] == 0.0

    def test_dominant_pipeline_is_significant(self):
        m = stats.significance_matrix(self._pipelines())
        i, j = 1, 0  # better vs base, 6 subjects, uniform +0.05
        assert m.p[i, j] == pytest.approx(1.0 / 64.0, abs=0)
        assert m.smd[i, j] == 0.0  # constant improvement: convention kicks in

    def test_subject_mismatch_rejected(self):
        bad = self._pipelines()
        bad["extra"] = {1: 0.5, 2: 0.6}
        with pytest.raises(ValueError, match="subject"):
            stats.significance_matrix(bad)

    def test_round_trip_dict(self):
        m = stats.significance_matrix(self._pipelines())
        d = m.to_dict()
        assert d["pipelines"] == ["base", "better", "noisy"]
        assert len(d["p"]) == 3 and len(d["p"][0]) == 3
