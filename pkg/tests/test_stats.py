import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficpsm import stats
from trafficpsm.stats import boxplot_summary, ks_statistic, ks_test, welch_t_test

import oracles

samples = st.lists(st.integers(min_value=-20, max_value=20), min_size=1, max_size=15)


class TestKSStatistic:
    def test_identical(self):
        assert ks_statistic([1, 2, 3], [1, 2, 3]) == 0.0

    def test_disjoint(self):
        assert ks_statistic([1, 2], [3, 4]) == 1.0

    def test_interleaved(self):
        assert ks_statistic([1, 3], [2, 4]) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ks_statistic([], [1.0])

    @given(samples, samples)
    def test_matches_enumeration_and_is_symmetric(self, a, b):
        d = ks_statistic(a, b)
        assert d == ks_statistic(b, a)
        assert 0.0 <= d <= 1.0
        assert d == pytest.approx(oracles.ks_enumerate(a, b), abs=1e-15)

    @given(samples, samples)
    def test_zero_iff_same_ecdf(self, a, b):
        same = sorted(a * len(b)) == sorted(b * len(a))
        assert (ks_statistic(a, b) == 0.0) == same

    @given(samples, samples, st.floats(0.1, 10), st.floats(-50, 50))
    def test_invariant_under_increasing_transform(self, a, b, scale, shift):
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        assert ks_statistic(a, b) == ks_statistic(np.exp(a / 10), np.exp(b / 10))
        assert ks_statistic(a, b) == ks_statistic(scale * a + shift, scale * b + shift)


class TestKSTest:
    def test_identical_samples(self):
        res = ks_test([1, 2, 3, 4], [1, 2, 3, 4])
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    @staticmethod
    def _p_at_112(d):
        ne = 112 * 112 / 224
        return stats.kolmogorov_q(d * (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)))

    @pytest.mark.xfail(strict=True, reason="D=0.08 at 112 vs 112 gives p=0.85, outside 0.72 +/- 0.1")
    def test_moderate_distance_p_band(self):
        assert abs(self._p_at_112(0.08) - 0.72) <= 0.1

    def test_moderate_distance_non_significant(self):
        assert self._p_at_112(0.08) == pytest.approx(0.8515400658, abs=1e-9)
        assert self._p_at_112(0.21) < 0.05
        a = np.arange(112.0)
        b = np.arange(112.0) + 9  # shifts 9 of 112 points past the top: D = 9/112
        res = ks_test(a, b)
        assert res.statistic == pytest.approx(9 / 112)
        assert res.p_value > 0.05

    def test_q_is_continuous_across_branch(self):
        assert stats.kolmogorov_q(1.0 - 1e-9) == pytest.approx(stats.kolmogorov_q(1.0), abs=1e-8)

    def test_q_known_value(self):
        # Q(1) from the defining series
        ref = 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k) for k in range(1, 50))
        assert stats.kolmogorov_q(1.0) == pytest.approx(ref, abs=1e-12)
        ref_small = 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * 0.5**2) for k in range(1, 200))
        assert stats.kolmogorov_q(0.5) == pytest.approx(ref_small, abs=1e-10)

    def test_small_samples_against_permutation(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            na, nb = rng.integers(1, 9, size=2)
            a = rng.integers(0, 12, size=na).astype(float)
            b = rng.integers(0, 12, size=nb).astype(float) + rng.integers(0, 3)
            assert abs(ks_test(a, b).p_value - oracles.ks_permutation_p(a, b)) < 1e-3

    def test_exact_and_asymptotic_agree_for_large_samples(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=60)
        b = rng.normal(0.3, size=70)
        exact = ks_test(a, b, method="exact").p_value
        asym = ks_test(a, b, method="asymptotic").p_value
        assert abs(exact - asym) < 0.03

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            ks_test([1.0], [2.0], method="bootstrap")

    @pytest.mark.xfail(
        strict=True,
        reason="asymptotic Kolmogorov p deviates up to ~0.25 from the permutation p at n<=8; "
        "ks_test(method='auto') switches to the exact null there",
    )
    def test_asymptotic_quality_small_samples(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            na, nb = rng.integers(2, 9, size=2)
            a = rng.normal(size=na)
            b = rng.normal(rng.uniform(0, 1.5), size=nb)
            p = ks_test(a, b, method="asymptotic").p_value
            assert abs(p - oracles.ks_permutation_p(a, b)) < 0.05


class TestWelch:
    def test_equal_samples(self):
        res = welch_t_test([1.0, 2.0, 5.0], [1.0, 2.0, 5.0])
        assert res.statistic == 0.0
        assert res.p_value == pytest.approx(1.0)

    def test_textbook_case(self):
        res = welch_t_test([1, 2, 3], [2, 3, 4])
        # frozen from oracles.welch_oracle (quadrature of the t density)
        assert res.statistic == pytest.approx(-1.224744871391589, abs=1e-12)
        assert res.df == pytest.approx(4.0)
        assert res.p_value == pytest.approx(0.28786413472669037, abs=1e-9)

    def test_degenerate_equal(self):
        res = welch_t_test([5, 5], [5, 5])
        assert res.p_value == 1.0 and res.extreme

    def test_degenerate_different(self):
        res = welch_t_test([5, 5], [6, 6])
        assert res.p_value == 0.0 and res.extreme and res.statistic == -math.inf

    def test_too_small(self):
        with pytest.raises(ValueError):
            welch_t_test([1.0], [1.0, 2.0])

    def test_random_pairs_against_quadrature(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(0, rng.uniform(0.5, 3), size=rng.integers(2, 30))
            b = rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 3), size=rng.integers(2, 30))
            t, df, p = oracles.welch_oracle(a, b)
            res = welch_t_test(a, b)
            assert res.statistic == pytest.approx(t, rel=1e-10)
            assert res.df == pytest.approx(df, rel=1e-10)
            assert abs(res.p_value - p) < 1e-3
            assert res.p_value == pytest.approx(p, rel=1e-8, abs=1e-12)

    def test_large_df_matches_normal(self):
        for x in np.linspace(-3, 3, 10):
            normal_two_sided = 2 * (1 - oracles.normal_cdf_quad(abs(x)))
            assert stats.t_sf_two_sided(x, 1e7) == pytest.approx(normal_two_sided, abs=1e-4)

    @settings(max_examples=50)
    @given(
        st.lists(st.floats(-100, 100), min_size=2, max_size=20),
        st.lists(st.floats(-100, 100), min_size=2, max_size=20),
        st.floats(0.1, 10),
        st.floats(-100, 100),
    )
    def test_affine_invariance(self, a, b, scale, shift):
        a = np.asarray(a)
        b = np.asarray(b)
        r1 = welch_t_test(a, b)
        r2 = welch_t_test(scale * a + shift, scale * b + shift)
        if r1.extreme or r2.extreme or np.var(a) < 1e-6 or np.var(b) < 1e-6:
            return
        assert r2.statistic == pytest.approx(r1.statistic, rel=1e-6, abs=1e-9)
        assert 0.0 <= r1.p_value <= 1.0


class TestBoxplot:
    def test_constant(self):
        assert tuple(boxplot_summary([1, 1, 1, 1])) == (1, 1, 1, 1, 1)

    def test_one_to_five(self):
        assert tuple(boxplot_summary([1, 2, 3, 4, 5])) == (1, 2, 3, 4, 5)

    def test_single(self):
        assert tuple(boxplot_summary([7])) == (7, 7, 7, 7, 7)

    def test_empty(self):
        with pytest.raises(ValueError):
            boxplot_summary([])


def test_ecdf_points():
    xs, fs = stats.ecdf_points([3, 1, 1, 2])
    assert xs == [1, 2, 3]
    assert fs == [0.5, 0.75, 1.0]
