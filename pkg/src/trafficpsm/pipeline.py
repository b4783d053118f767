"""Iterative control-pool expansion, gating and method comparison.

For m = 1, 2, ... the control pool is the first m windows of the study's
``week_order``. Each iteration scores, checks common support, matches and
tests balance; the first m that passes both gates yields the effect. Outcomes
are read only after a pool has passed, so pool selection never looks at speed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import matching
from .dataset import StudyTable, control_subset
from .errors import ConfigError, InsufficientControlPoolError, ModelFitError, PSMError
from .matching import BalanceReport, Method, OverlapReport
from .synthetic import (
    GroundTruth,
    ScenarioSpec,
    confounded_scenario,
    generate_synthetic,
    nonlinear_scenario,
    staged_scenario,
)

__all__ = [
    "EvaluationConfig",
    "IterationRecord",
    "EvaluationResult",
    "PassResult",
    "MethodOutcome",
    "Comparison",
    "evaluate",
    "single_pass",
    "compare_methods",
    "naive_difference",
    "DEFAULT_BOOSTING",
    "GroundTruth",
    "ScenarioSpec",
    "generate_synthetic",
    "confounded_scenario",
    "staged_scenario",
    "nonlinear_scenario",
]

# Propensity preset: slow stochastic stumps. Deeper or faster ensembles put
# treated and control rows in shared leaves, the resulting exact score ties
# all resolve to one control, and the matched sample fails KS.
DEFAULT_BOOSTING = {
    "n_trees": 100,
    "max_depth": 1,
    "shrinkage": 0.02,
    "reg_lambda": 1.0,
    "gamma": 0.0,
    "min_child_weight": 1.0,
    "subsample": 0.3,
}
DEFAULT_PROBIT = {"max_iter": 100, "tol": 1e-8}


@dataclass(frozen=True)
class EvaluationConfig:
    method: Method = Method.XGBOOST
    alpha: float = 0.05
    csc_threshold: float = 0.95
    max_weeks: Optional[int] = None
    with_replacement: bool = True
    caliper: Optional[float] = None
    boosting: dict = field(default_factory=lambda: dict(DEFAULT_BOOSTING))
    probit: dict = field(default_factory=lambda: dict(DEFAULT_PROBIT))
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, "method", Method(self.method))
        except ValueError as exc:
            raise ConfigError(f"unknown method {self.method!r}") from exc
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0 <= self.csc_threshold <= 1:
            raise ConfigError(f"csc_threshold must be in [0, 1], got {self.csc_threshold}")
        if self.max_weeks is not None and self.max_weeks < 1:
            raise ConfigError(f"max_weeks must be >= 1, got {self.max_weeks}")
        if self.caliper is not None and self.caliper <= 0:
            raise ConfigError("caliper must be positive")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")
        object.__setattr__(self, "boosting", {**DEFAULT_BOOSTING, **dict(self.boosting)})
        object.__setattr__(self, "probit", {**DEFAULT_PROBIT, **dict(self.probit)})

    def replace(self, **changes) -> "EvaluationConfig":
        doc = {**self.to_dict(), **changes}
        return EvaluationConfig.from_dict(doc)

    def hyperparams(self) -> dict:
        if self.method is Method.PROBIT:
            return dict(self.probit)
        return {**self.boosting, "n_jobs": self.n_jobs}

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "alpha": self.alpha,
            "csc_threshold": self.csc_threshold,
            "max_weeks": self.max_weeks,
            "with_replacement": self.with_replacement,
            "caliper": self.caliper,
            "boosting": dict(sorted(self.boosting.items())),
            "probit": dict(sorted(self.probit.items())),
            "seed": self.seed,
            "n_jobs": self.n_jobs,
        }

    def report_dict(self) -> dict:
        """Settings that determine results; thread count is left out."""
        doc = self.to_dict()
        del doc["n_jobs"]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "EvaluationConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown evaluation config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class IterationRecord:
    """One pass of the m-loop. ``balance`` is None when CSC failed."""

    m: int
    windows: tuple
    n_control: int
    coverage: float
    csc_passed: bool
    balance: Optional[BalanceReport] = None

    @property
    def balanced(self) -> Optional[bool]:
        return None if self.balance is None else self.balance.balanced

    @property
    def failing(self) -> list[str]:
        return [] if self.balance is None else self.balance.failing

    @property
    def passed(self) -> bool:
        return self.csc_passed and bool(self.balanced)


@dataclass(frozen=True)
class EvaluationResult:
    segment_id: str
    method: Method
    effect_mph: float
    effect_p: float
    sample_size_weeks: int
    balance: BalanceReport
    overlap: OverlapReport
    trace: tuple
    n_treated: int
    n_unique_controls: int
    with_replacement: bool


def _iterate(table: StudyTable, config: EvaluationConfig, m: int):
    sub = control_subset(table, m)
    try:
        scores = matching.estimate_scores(sub, config.method, config.hyperparams(), config.seed)
    except ModelFitError as exc:
        exc.m = m
        raise
    overlap = matching.check_common_support(scores, sub, config.csc_threshold)
    record = dict(m=m, windows=sub.week_order, n_control=sub.n_control, coverage=overlap.coverage,
                  csc_passed=overlap.passed)
    if not overlap.passed:
        return sub, overlap, None, IterationRecord(**record)
    pairs = matching.match_nearest(scores, sub, config.with_replacement, config.caliper)
    report = matching.balance_test(sub, pairs, config.alpha)
    return sub, overlap, pairs, IterationRecord(**record, balance=report)


@dataclass(frozen=True)
class PassResult:
    """Scoring, support check, matching and balance at one fixed pool size."""

    m: int
    table: StudyTable
    scores: matching.PropensityScores
    overlap: OverlapReport
    pairs: matching.MatchedPairs
    balance: BalanceReport


def single_pass(table: StudyTable, config: EvaluationConfig, m: int) -> PassResult:
    """Match and test at pool size ``m`` whether or not common support holds."""
    sub = control_subset(table, m)
    scores = matching.estimate_scores(sub, config.method, config.hyperparams(), config.seed)
    overlap = matching.check_common_support(scores, sub, config.csc_threshold)
    pairs = matching.match_nearest(scores, sub, config.with_replacement, config.caliper)
    return PassResult(m, sub, scores, overlap, pairs, matching.balance_test(sub, pairs, config.alpha))


def evaluate(table: StudyTable, config: EvaluationConfig = EvaluationConfig()) -> EvaluationResult:
    """Smallest control pool that passes common support and balance, and its effect.

    Raises :class:`InsufficientControlPoolError` (with ``.trace``) if no
    m up to ``max_weeks`` passes. Model-fit errors carry the failing ``m``
    and the trace so far.
    """
    available = len(table.week_order)
    max_weeks = available if config.max_weeks is None else config.max_weeks
    if max_weeks > available:
        raise ConfigError(f"max_weeks={max_weeks} but only {available} control windows")
    trace = []
    for m in range(1, max_weeks + 1):
        try:
            sub, overlap, pairs, record = _iterate(table, config, m)
        except ModelFitError as exc:
            exc.trace = list(trace)
            raise
        trace.append(record)
        if not record.passed:
            continue
        effect = matching.atet(sub, pairs)
        test = matching.effect_test(sub, pairs)
        return EvaluationResult(
            segment_id=table.segment_id,
            method=config.method,
            effect_mph=effect,
            effect_p=test.p_value,
            sample_size_weeks=m,
            balance=record.balance,
            overlap=overlap,
            trace=tuple(trace),
            n_treated=sub.n_treated,
            n_unique_controls=int(np.unique(pairs.control_indices).size),
            with_replacement=config.with_replacement,
        )
    raise InsufficientControlPoolError(
        f"{table.segment_id}: no control pool of 1..{max_weeks} weeks passed common support and balance "
        f"({config.method.value})",
        trace,
    )


@dataclass(frozen=True)
class MethodOutcome:
    """Result or failure of one method; exactly one of the two is set."""

    method: Method
    result: Optional[EvaluationResult] = None
    failure: Optional[str] = None
    error: Optional[PSMError] = field(default=None, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.result is not None

    @property
    def trace(self) -> tuple:
        if self.result is not None:
            return self.result.trace
        return tuple(getattr(self.error, "trace", ()) or ())


@dataclass(frozen=True)
class Comparison:
    segment_id: str
    outcomes: tuple

    def outcome(self, method) -> MethodOutcome:
        method = Method(method)
        return next(o for o in self.outcomes if o.method is method)


COMPARISON_ORDER = (Method.PROBIT, Method.GBM, Method.XGBOOST)


def compare_methods(table: StudyTable, base_config: EvaluationConfig = EvaluationConfig()) -> Comparison:
    """Evaluate with each propensity model under a shared seed and alpha."""
    outcomes = []
    for method in COMPARISON_ORDER:
        config = base_config.replace(method=method)
        try:
            outcomes.append(MethodOutcome(method, result=evaluate(table, config)))
        except InsufficientControlPoolError as exc:
            outcomes.append(MethodOutcome(method, failure="insufficient_control_pool", error=exc))
        except ModelFitError as exc:
            outcomes.append(MethodOutcome(method, failure=f"model_fit: {exc.cause}", error=exc))
    return Comparison(table.segment_id, tuple(outcomes))


def naive_difference(table: StudyTable, m: Optional[int] = None) -> float:
    """Unmatched mean treated outcome minus mean control outcome over the first m weeks."""
    sub = table if m is None else control_subset(table, m)
    y = sub.outcomes()
    treated = sub.labels == 1
    return float(np.nanmean(y[treated]) - np.nanmean(y[~treated]))

