"""Propensity scores, common support, nearest-neighbour matching and effects.

Indices everywhere refer to positions in ``StudyTable.observations``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import stats
from .boosting import BoostedTreeClassifier, Mode
from .dataset import StudyTable, covariate_matrix
from .errors import CaliperError, MissingOutcomeError, ModelFitError, PoolExhaustedError, PSMError
from .probit import ProbitClassifier

__all__ = [
    "Method",
    "PropensityScores",
    "OverlapReport",
    "Pair",
    "MatchedPairs",
    "BalanceRow",
    "BalanceReport",
    "make_propensity_model",
    "estimate_scores",
    "check_common_support",
    "match_nearest",
    "balance_test",
    "atet",
    "effect_test",
]


class Method(str, enum.Enum):
    XGBOOST = "xgboost"
    GBM = "gbm"
    PROBIT = "probit"


@dataclass(frozen=True)
class PropensityScores:
    scores: np.ndarray
    method: Method

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 1 or not np.all(np.isfinite(s)) or np.any((s <= 0) | (s >= 1)):
            raise ValueError("propensity scores must be finite and inside (0, 1)")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "method", Method(self.method))

    def __len__(self):
        return self.scores.shape[0]


@dataclass(frozen=True)
class OverlapReport:
    treated_range: tuple
    control_range: tuple
    coverage: float
    threshold: float
    treated_summary: stats.FiveNumberSummary
    control_summary: stats.FiveNumberSummary

    @property
    def passed(self) -> bool:
        return self.coverage >= self.threshold


class Pair(NamedTuple):
    treated_index: int
    control_index: int
    distance: float


@dataclass(frozen=True)
class MatchedPairs:
    pairs: tuple
    with_replacement: bool

    @property
    def treated_indices(self) -> np.ndarray:
        return np.array([p.treated_index for p in self.pairs], dtype=int)

    @property
    def control_indices(self) -> np.ndarray:
        return np.array([p.control_index for p in self.pairs], dtype=int)


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    mean_treated: float
    mean_control_before: float
    mean_control_after: float
    t_p_before: float
    t_p_after: float
    ks_stat_before: float
    ks_stat_after: float
    ks_p_before: float
    ks_p_after: float

    def passes(self, alpha: float) -> bool:
        return self.t_p_after > alpha and self.ks_p_after > alpha

    def passes_before(self, alpha: float) -> bool:
        return self.t_p_before > alpha and self.ks_p_before > alpha


@dataclass(frozen=True)
class BalanceReport:
    rows: tuple
    alpha: float

    @property
    def balanced(self) -> bool:
        return all(r.passes(self.alpha) for r in self.rows)

    @property
    def failing(self) -> list[str]:
        return [r.covariate for r in self.rows if not r.passes(self.alpha)]

    @property
    def mean_ks_after(self) -> float:
        return float(np.mean([r.ks_stat_after for r in self.rows]))


def make_propensity_model(method, hyperparams: Optional[dict] = None, seed: int = 0):
    """Unfitted scikit-learn estimator for ``method``."""
    method = Method(method)
    hp = dict(hyperparams or {})
    if method is Method.PROBIT:
        return ProbitClassifier(**hp)
    hp.setdefault("seed", seed)
    hp["mode"] = Mode.FIRST_ORDER_GBM if method is Method.GBM else Mode.SECOND_ORDER
    return BoostedTreeClassifier(**hp)


def estimate_scores(table: StudyTable, method=Method.XGBOOST, hyperparams: Optional[dict] = None,
                    seed: int = 0) -> PropensityScores:
    """Fit the propensity model on the table and score every observation."""
    method = Method(method)
    X, y = covariate_matrix(table)
    model = make_propensity_model(method, hyperparams, seed)
    try:
        model.fit(X, y)
    except PSMError as exc:
        raise ModelFitError(method.value, exc) from exc
    return PropensityScores(model.predict_proba(X)[:, 1], method)


def _split_scores(scores: PropensityScores, table: StudyTable):
    if len(scores) != len(table.observations):
        raise ValueError(f"{len(scores)} scores for {len(table.observations)} observations")
    t_idx = table.treated_indices()
    c_idx = table.control_indices()
    return t_idx, c_idx, scores.scores[t_idx], scores.scores[c_idx]


def check_common_support(scores: PropensityScores, table: StudyTable, threshold: float = 0.95) -> OverlapReport:
    """Fraction of treated scores inside the [min, max] range of control scores."""
    _, _, st, sc = _split_scores(scores, table)
    lo, hi = float(sc.min()), float(sc.max())
    coverage = float(np.mean((st >= lo) & (st <= hi)))
    return OverlapReport(
        treated_range=(float(st.min()), float(st.max())),
        control_range=(lo, hi),
        coverage=coverage,
        threshold=threshold,
        treated_summary=stats.boxplot_summary(st),
        control_summary=stats.boxplot_summary(sc),
    )


def match_nearest(scores: PropensityScores, table: StudyTable, with_replacement: bool = True,
                  caliper: Optional[float] = None) -> MatchedPairs:
    """1:1 nearest-neighbour matching on the propensity score.

    Treated observations are processed in ascending index; distance ties go
    to the lowest control index. Without replacement a chosen control leaves
    the pool. With a caliper, a treated observation whose nearest available
    control is farther than ``caliper`` raises :class:`CaliperError`.
    """
    t_idx, c_idx, st, sc = _split_scores(scores, table)
    if c_idx.size == 0:
        raise PoolExhaustedError("no control observations")
    if not with_replacement and c_idx.size < t_idx.size:
        raise PoolExhaustedError(f"{t_idx.size} treated but only {c_idx.size} controls without replacement")
    pairs = []
    if with_replacement:
        dist = np.abs(st[:, None] - sc[None, :])
        best = np.argmin(dist, axis=1)  # first minimum = lowest control index
        chosen = zip(range(t_idx.size), best, dist[np.arange(t_idx.size), best])
    else:
        available = np.ones(c_idx.size, dtype=bool)
        picked = []
        for i in range(t_idx.size):
            d = np.where(available, np.abs(st[i] - sc), np.inf)
            j = int(np.argmin(d))
            available[j] = False
            picked.append((i, j, d[j]))
        chosen = picked
    for i, j, d in chosen:
        if caliper is not None and d > caliper:
            raise CaliperError(f"treated observation {t_idx[i]} has no control within caliper {caliper} (nearest {d:.4g})")
        pairs.append(Pair(int(t_idx[i]), int(c_idx[j]), float(d)))
    return MatchedPairs(tuple(pairs), with_replacement)


def balance_test(table: StudyTable, pairs: MatchedPairs, alpha: float = 0.05) -> BalanceReport:
    """Per-covariate Welch t and KS tests before and after matching.

    "Before" compares all treated with all controls; "after" compares the
    treated with the matched-control multiset (repeats counted per pair).
    """
    X, y = covariate_matrix(table)
    treated = X[pairs.treated_indices]
    matched = X[pairs.control_indices]
    control_all = X[y == 0]
    rows = []
    for k, name in enumerate(table.covariate_names):
        a, before, after = treated[:, k], control_all[:, k], matched[:, k]
        t_before = stats.welch_t_test(a, before)
        t_after = stats.welch_t_test(a, after)
        ks_before = stats.ks_test(a, before)
        ks_after = stats.ks_test(a, after)
        rows.append(
            BalanceRow(
                covariate=name,
                mean_treated=float(a.mean()),
                mean_control_before=float(before.mean()),
                mean_control_after=float(after.mean()),
                t_p_before=t_before.p_value,
                t_p_after=t_after.p_value,
                ks_stat_before=ks_before.statistic,
                ks_stat_after=ks_after.statistic,
                ks_p_before=ks_before.p_value,
                ks_p_after=ks_after.p_value,
            )
        )
    return BalanceReport(tuple(rows), alpha)


def _paired_outcomes(table: StudyTable, pairs: MatchedPairs):
    obs = table.observations
    treated, control = [], []
    for p in pairs.pairs:
        for idx, sink in ((p.treated_index, treated), (p.control_index, control)):
            o = obs[idx]
            if o.outcome is None:
                raise MissingOutcomeError(idx, f"{o.week_id} {o.date.isoformat()} {o.hour:02d}h")
            sink.append(o.outcome)
    return np.array(treated), np.array(control)


def atet(table: StudyTable, pairs: MatchedPairs) -> float:
    """Mean treated outcome minus mean matched-control outcome."""
    treated, control = _paired_outcomes(table, pairs)
    return float(treated.mean() - control.mean())


def effect_test(table: StudyTable, pairs: MatchedPairs) -> stats.TestResult:
    """Welch t-test of treated outcomes against matched-control outcomes."""
    treated, control = _paired_outcomes(table, pairs)
    return stats.welch_t_test(treated, control)
