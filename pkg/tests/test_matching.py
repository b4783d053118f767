import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from trafficpsm.errors import CaliperError, MissingOutcomeError, ModelFitError, PoolExhaustedError, SeparationError
from trafficpsm.matching import (
    BalanceReport,
    BalanceRow,
    MatchedPairs,
    Method,
    Pair,
    PropensityScores,
    atet,
    balance_test,
    check_common_support,
    effect_test,
    estimate_scores,
    match_nearest,
)

from conftest import make_table


def scored(treated, control, **kw):
    table = make_table([[1.0]] * len(treated), [[1.0]] * len(control), **kw)
    return PropensityScores(np.r_[treated, control], Method.XGBOOST), table


def brute_force_pairs(st_, sc):
    out = []
    for i, s in enumerate(st_):
        best = None
        for j, c in enumerate(sc):
            d = abs(s - c)
            if best is None or d < best[1]:
                best = (j, d)
        out.append(best)
    return out


class TestScores:
    def test_range_enforced(self):
        with pytest.raises(ValueError):
            PropensityScores(np.array([0.2, 1.0]), "probit")
        with pytest.raises(ValueError):
            PropensityScores(np.array([np.nan]), "probit")

    @pytest.mark.parametrize("method", list(Method))
    def test_identical_covariates_equal_scores(self, method):
        table = make_table([[5.0, 7.0]] * 20, [[5.0, 7.0]] * 30)
        s = estimate_scores(table, method).scores
        assert np.ptp(s) == 0.0
        assert len(s) == 50

    def test_probit_separation_tagged(self):
        table = make_table([[10.0], [11.0], [12.0]], [[1.0], [2.0], [3.0]])
        with pytest.raises(ModelFitError) as err:
            estimate_scores(table, Method.PROBIT)
        assert err.value.method == "probit"
        assert isinstance(err.value.cause, SeparationError)

    @pytest.mark.parametrize("method", list(Method))
    def test_confounded_rank_correlation(self, method):
        rng = np.random.default_rng(11)
        X = rng.uniform(100, 900, size=(500, 3))
        p = 1 / (1 + np.exp(-(X[:, 0] - 500) / 80))
        y = rng.uniform(size=500) < p
        table = make_table(X[y], X[~y])
        Xo = np.r_[X[y], X[~y]]
        s = estimate_scores(table, method, seed=3).scores
        assert spearmanr(Xo[:, 0], s)[0] > 0.5

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        table = make_table(rng.uniform(0, 10, (30, 2)) + 1, rng.uniform(0, 10, (60, 2)))
        hp = {"subsample": 0.5}
        a = estimate_scores(table, "xgboost", hp, seed=4).scores
        b = estimate_scores(table, "xgboost", hp, seed=4).scores
        assert np.array_equal(a, b)


class TestCommonSupport:
    def test_partial_coverage(self):
        scores, table = scored([0.4, 0.5, 0.6, 0.96], [0.1, 0.9])
        rep = check_common_support(scores, table, 0.95)
        assert rep.coverage == 0.75
        assert not rep.passed
        assert rep.treated_range == (0.4, 0.96) and rep.control_range == (0.1, 0.9)

    def test_identical_multisets(self):
        scores, table = scored([0.2, 0.3, 0.7], [0.7, 0.2, 0.3])
        rep = check_common_support(scores, table)
        assert rep.coverage == 1.0 and rep.passed

    def test_disjoint(self):
        scores, table = scored([0.91, 0.95], [0.1, 0.9])
        rep = check_common_support(scores, table)
        assert rep.coverage == 0.0 and not rep.passed

    def test_summaries(self):
        scores, table = scored([0.1, 0.2, 0.3, 0.4, 0.5], [0.5, 0.6])
        rep = check_common_support(scores, table)
        assert rep.treated_summary.median == 0.3
        assert rep.control_summary.max == 0.6

    @settings(max_examples=100)
    @given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=20),
           st.lists(st.floats(0.01, 0.99), min_size=1, max_size=20),
           st.floats(0, 1))
    def test_pass_iff_threshold(self, t, c, thr):
        scores, table = scored(t, c)
        rep = check_common_support(scores, table, thr)
        assert 0 <= rep.coverage <= 1
        assert rep.passed == (rep.coverage >= thr)


class TestMatch:
    def test_nearest(self):
        scores, table = scored([0.5], [0.30, 0.45, 0.60])
        (pair,) = match_nearest(scores, table).pairs
        assert pair.control_index == 2
        assert pair.distance == pytest.approx(0.05)

    def test_tie_lowest_index(self):
        scores, table = scored([0.5], [0.45, 0.55])
        (pair,) = match_nearest(scores, table).pairs
        assert pair.control_index == 1

    def test_exact(self):
        scores, table = scored([0.5], [0.2, 0.5, 0.8])
        (pair,) = match_nearest(scores, table).pairs
        assert pair == Pair(0, 2, 0.0)

    def test_without_replacement_removes(self):
        scores, table = scored([0.5, 0.5], [0.5, 0.9])
        pairs = match_nearest(scores, table, with_replacement=False)
        assert [p.control_index for p in pairs.pairs] == [2, 3]
        assert not pairs.with_replacement

    def test_pool_exhausted(self):
        scores, table = scored([0.5, 0.6], [0.5])
        with pytest.raises(PoolExhaustedError):
            match_nearest(scores, table, with_replacement=False)

    def test_caliper(self):
        scores, table = scored([0.5, 0.9], [0.49, 0.1])
        with pytest.raises(CaliperError):
            match_nearest(scores, table, caliper=0.05)
        assert len(match_nearest(scores, table, caliper=0.5).pairs) == 2

    @settings(max_examples=150, deadline=None)
    @given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=60),
           st.lists(st.floats(0.01, 0.99), min_size=1, max_size=140))
    def test_brute_force_nearest(self, t, c):
        scores, table = scored(t, c)
        pairs = match_nearest(scores, table).pairs
        assert [p.treated_index for p in pairs] == list(range(len(t)))
        for p, (j, d) in zip(pairs, brute_force_pairs(t, c)):
            assert p.control_index == len(t) + j
            assert p.distance == d >= 0
            assert not table.observations[p.control_index].treated

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.01, 0.99), min_size=2, max_size=30),
           st.lists(st.floats(0.01, 0.99), min_size=1, max_size=30),
           st.randoms(use_true_random=False))
    def test_order_independent(self, t, c, rnd):
        scores, table = scored(t, c)
        base = {p.treated_index: p.control_index for p in match_nearest(scores, table).pairs}
        perm = list(range(len(t)))
        rnd.shuffle(perm)
        t2 = [t[i] for i in perm]
        scores2, table2 = scored(t2, c)
        for p in match_nearest(scores2, table2).pairs:
            assert p.control_index == base[perm[p.treated_index]]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.05, 0.95), min_size=1, max_size=30),
           st.lists(st.floats(0.05, 0.95), min_size=1, max_size=30),
           st.floats(0.1, 1.0), st.floats(0.0, 0.04))
    def test_affine_invariance(self, t, c, a, b):
        scores, table = scored(t, c)
        s2 = PropensityScores(a * scores.scores + b, Method.XGBOOST)
        first = [p.control_index for p in match_nearest(scores, table).pairs]
        # exact float ties can break differently after rounding; compare only clear winners
        second = [p.control_index for p in match_nearest(s2, table).pairs]
        for i, (x, y) in enumerate(zip(first, second)):
            if x != y:
                d = np.abs(np.asarray(c) - t[i])
                assert np.isclose(d[x - len(t)], d[y - len(t)], rtol=1e-9, atol=1e-12)


class TestBalance:
    def test_self_match(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(100, 200, (20, 3))
        table = make_table(X, X)
        pairs = MatchedPairs(tuple(Pair(i, 20 + i, 0.0) for i in range(20)), True)
        rep = balance_test(table, pairs)
        assert rep.balanced
        for r in rep.rows:
            assert r.t_p_after == 1.0 and r.ks_p_after == 1.0

    def test_row_passes_after_not_before(self):
        ok = BalanceRow("WBT#5", 550, 577, 552, 0.0, 0.81, 0.21, 0.08, 0.001, 0.72)
        assert ok.passes(0.05)
        assert not ok.passes_before(0.05)

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=8), st.floats(0.001, 0.5))
    def test_balanced_is_conjunction(self, ps, alpha):
        rows = tuple(BalanceRow(f"x{i}", 0, 0, 0, 0.5, t, 0, 0, 0.5, k) for i, (t, k) in enumerate(ps))
        rep = BalanceReport(rows, alpha)
        assert rep.balanced == all(t > alpha and k > alpha for t, k in ps)
        assert set(rep.failing) == {r.covariate for r in rows if not (r.t_p_after > alpha and r.ks_p_after > alpha)}

    def test_before_uses_all_controls(self):
        table = make_table([[1.0], [2.0], [3.0]], [[1.0], [2.0], [3.0], [50.0], [60.0]])
        pairs = MatchedPairs(tuple(Pair(i, 3 + i, 0.0) for i in range(3)), True)
        (row,) = balance_test(table, pairs).rows
        assert row.mean_control_before == pytest.approx(23.2)
        assert row.mean_control_after == 2.0

    def test_repeats_counted(self):
        table = make_table([[1.0], [3.0]], [[1.0], [9.0]])
        pairs = MatchedPairs((Pair(0, 2, 0.0), Pair(1, 2, 2.0)), True)
        (row,) = balance_test(table, pairs).rows
        assert row.mean_control_after == 1.0


class TestEffect:
    def test_atet(self):
        table = make_table([[1.0], [2.0]], [[1.0], [2.0]], y_treated=[50, 52], y_control=[48, 50])
        pairs = MatchedPairs((Pair(0, 2, 0.0), Pair(1, 3, 0.0)), True)
        assert atet(table, pairs) == 2.0

    def test_self_match_zero(self):
        rng = np.random.default_rng(5)
        y = rng.normal(40, 3, 25)
        table = make_table(np.ones((25, 1)), np.ones((25, 1)), y_treated=y, y_control=y)
        pairs = MatchedPairs(tuple(Pair(i, 25 + i, 0.0) for i in range(25)), True)
        assert atet(table, pairs) == 0.0
        assert effect_test(table, pairs).p_value == 1.0

    def test_large_shift_significant(self):
        table = make_table(np.ones((30, 1)), np.ones((30, 1)), y_treated=np.linspace(50, 52, 30),
                           y_control=np.linspace(40, 42, 30))
        pairs = MatchedPairs(tuple(Pair(i, 30 + i, 0.0) for i in range(30)), True)
        assert effect_test(table, pairs).p_value < 0.01

    def test_missing_outcome(self):
        table = make_table([[1.0]], [[1.0], [2.0]], y_treated=[40.0], y_control=[None, 41.0])
        pairs = MatchedPairs((Pair(0, 1, 0.0),), True)
        with pytest.raises(MissingOutcomeError) as err:
            atet(table, pairs)
        assert err.value.index == 1

    def test_repeats_in_mean(self):
        table = make_table([[1.0], [1.0], [1.0]], [[1.0], [1.0]], y_treated=[10, 10, 10], y_control=[4, 7])
        pairs = MatchedPairs((Pair(0, 3, 0.0), Pair(1, 3, 0.0), Pair(2, 4, 0.0)), True)
        assert atet(table, pairs) == pytest.approx(5.0)
