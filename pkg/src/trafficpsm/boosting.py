"""Second-order gradient boosted trees for binary propensity estimation.

Trees are binary, axis-aligned and grown by exact greedy enumeration of
midpoints between sorted distinct feature values. Each round takes a Newton
step on the logistic loss: leaf weights ``-G / (H + lambda)`` and split
gain ``0.5 * [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma``.

``Mode.FIRST_ORDER_GBM`` is the same learner with the regularisers forced
to zero, used as the plain "GBM" baseline.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DegenerateLeafError, DegenerateTrainingError, ShapeError

__all__ = [
    "Mode",
    "BoostParams",
    "GradPair",
    "Leaf",
    "Split",
    "Ensemble",
    "SplitCandidate",
    "logistic_grad",
    "leaf_weight",
    "split_gain",
    "find_best_split",
    "train",
    "predict_proba",
    "dump_ensemble",
    "BoostedTreeClassifier",
]

HESS_FLOOR = 1e-16
PROBA_CLIP = 1e-9
# gains within this relative distance of the best are ties
TIE_RTOL = 1e-12


class Mode(str, enum.Enum):
    SECOND_ORDER = "second_order"
    FIRST_ORDER_GBM = "gbm"


@dataclass(frozen=True)
class BoostParams:
    n_trees: int = 100
    max_depth: int = 3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    shrinkage: float = 0.1
    min_child_weight: float = 1.0
    base_score: float = 0.5
    subsample: float = 1.0
    seed: int = 0
    mode: Mode = Mode.SECOND_ORDER
    n_jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ValueError("reg_lambda, gamma and min_child_weight must be >= 0")
        if not 0 < self.shrinkage <= 1:
            raise ValueError("shrinkage must be in (0, 1]")
        if not 0 < self.base_score < 1:
            raise ValueError("base_score must be in (0, 1)")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")

    def effective(self) -> "BoostParams":
        """Parameters actually used for training (GBM mode drops regularisation)."""
        if self.mode is Mode.FIRST_ORDER_GBM:
            return replace(self, reg_lambda=0.0, gamma=0.0)
        return self


class GradPair(NamedTuple):
    g: float
    h: float


@dataclass(frozen=True)
class Leaf:
    weight: float
    sum_g: float
    sum_h: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float
    left: "TreeNode"
    right: "TreeNode"
    sum_g: float
    sum_h: float


TreeNode = Union[Leaf, Split]


class SplitCandidate(NamedTuple):
    feature: int
    threshold: float
    gain: float


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def logistic_grad(label: int, margin: float) -> GradPair:
    """Gradient and hessian of the log-loss with respect to the margin."""
    p = 1.0 / (1.0 + math.exp(-margin)) if margin >= 0 else math.exp(margin) / (1.0 + math.exp(margin))
    return GradPair(p - label, max(p * (1.0 - p), HESS_FLOOR))


def _logistic_grad_arrays(y: np.ndarray, margin: np.ndarray):
    p = _sigmoid(margin)
    return p - y, np.maximum(p * (1.0 - p), HESS_FLOOR)


def leaf_weight(sum_g: float, sum_h: float, reg_lambda: float) -> float:
    denom = sum_h + reg_lambda
    if denom <= 0:
        raise DegenerateLeafError(f"sum_h + lambda = {denom}")
    return -sum_g / denom


def split_gain(gl, hl, gr, hr, reg_lambda, gamma) -> float:
    return 0.5 * (
        gl * gl / (hl + reg_lambda)
        + gr * gr / (hr + reg_lambda)
        - (gl + gr) ** 2 / (hl + hr + reg_lambda)
    ) - gamma


def _feature_candidates(x, g, h, params: BoostParams):
    """Best (gain, threshold) on one feature, or None. Ties -> lowest threshold."""
    order = np.argsort(x, kind="stable")
    xs, gs, hs = x[order], g[order], h[order]
    distinct = xs[1:] != xs[:-1]
    if not distinct.any():
        return None
    cg = np.cumsum(gs)[:-1]
    ch = np.cumsum(hs)[:-1]
    G, H = gs.sum(), hs.sum()
    ok = distinct & (ch >= params.min_child_weight) & (H - ch >= params.min_child_weight)
    if not ok.any():
        return None
    idx = np.flatnonzero(ok)
    gains = split_gain(cg[idx], ch[idx], G - cg[idx], H - ch[idx], params.reg_lambda, params.gamma)
    return gains, xs[idx], xs[idx + 1]


def find_best_split(X, g, h, params: BoostParams = BoostParams()) -> Optional[SplitCandidate]:
    """Exact greedy search over all features of the rows in ``X``.

    Returns the candidate with maximal gain among splits whose children both
    carry hessian mass >= ``min_child_weight``; ties (within a relative
    ``TIE_RTOL``) go to the lowest feature index, then the lowest threshold.
    Returns None when no candidate has positive gain.
    """
    X = np.asarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if X.shape[0] < 2:
        return None
    features = range(X.shape[1])

    def scan(f):
        return _feature_candidates(X[:, f], g, h, params)

    if params.n_jobs > 1 and X.shape[1] > 1:
        with ThreadPoolExecutor(max_workers=params.n_jobs) as pool:
            per_feature = list(pool.map(scan, features))
    else:
        per_feature = [scan(f) for f in features]

    maxima = [res[0].max() for res in per_feature if res is not None]
    if not maxima:
        return None
    best = max(maxima)
    if best <= 0:
        return None
    cutoff = best - TIE_RTOL * max(1.0, abs(best))
    for f, res in enumerate(per_feature):
        if res is None:
            continue
        gains, lo, hi = res
        hits = np.flatnonzero(gains >= cutoff)
        if hits.size:
            i = hits[0]
            thr = 0.5 * (lo[i] + hi[i])
            if thr <= lo[i]:  # adjacent floats: midpoint rounds down
                thr = hi[i]
            return SplitCandidate(f, float(thr), float(gains[i]))
    raise AssertionError("unreachable: best gain not found")


def _grow(X, g, h, rows, depth, params: BoostParams) -> TreeNode:
    sg = float(g[rows].sum())
    sh = float(h[rows].sum())
    if depth < params.max_depth and rows.size >= 2:
        cand = find_best_split(X[rows], g[rows], h[rows], params)
        if cand is not None:
            mask = X[rows, cand.feature] < cand.threshold
            left = _grow(X, g, h, rows[mask], depth + 1, params)
            right = _grow(X, g, h, rows[~mask], depth + 1, params)
            gain = split_gain(left.sum_g, left.sum_h, right.sum_g, right.sum_h, params.reg_lambda, params.gamma)
            return Split(cand.feature, cand.threshold, gain, left, right, sg, sh)
    return Leaf(leaf_weight(sg, sh, params.reg_lambda), sg, sh)


def _tree_output(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if isinstance(nd, Leaf):
            out[idx] = nd.weight
            continue
        mask = X[idx, nd.feature] < nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


@dataclass(frozen=True)
class Ensemble:
    trees: tuple
    base_margin: float
    shrinkage: float
    n_features: int
    train_loss: tuple = ()

    def margin(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} covariates, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += _tree_output(tree, X)
        return self.base_margin + self.shrinkage * total


def _log_loss(y, margin) -> float:
    # log(1 + exp(-m)) for y=1, log(1 + exp(m)) for y=0
    return float(np.sum(np.logaddexp(0.0, np.where(y == 1, -margin, margin))))


def train(X, y, params: BoostParams = BoostParams()) -> Ensemble:
    """Fit ``params.n_trees`` boosting rounds on 0/1 labels."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] == 0:
        raise ShapeError("X must be a non-empty 2-d array")
    if y.shape[0] != X.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if np.unique(y).size < 2:
        raise DegenerateTrainingError("labels contain a single class")

    eff = params.effective()
    base_margin = math.log(eff.base_score / (1.0 - eff.base_score))
    margin = np.full(y.shape[0], base_margin)
    rng = np.random.default_rng(eff.seed)
    n = y.shape[0]
    n_sub = max(2, int(math.floor(eff.subsample * n)))
    trees = []
    losses = [_log_loss(y, margin)]
    for _ in range(eff.n_trees):
        g, h = _logistic_grad_arrays(y, margin)
        if eff.subsample < 1.0 and n_sub < n:
            rows = np.sort(rng.choice(n, size=n_sub, replace=False))
        else:
            rows = np.arange(n)
        tree = _grow(X, g, h, rows, 0, eff)
        trees.append(tree)
        margin = margin + eff.shrinkage * _tree_output(tree, X)
        losses.append(_log_loss(y, margin))
    return Ensemble(tuple(trees), base_margin, eff.shrinkage, X.shape[1], tuple(losses))


def predict_proba(model: Ensemble, X) -> Union[float, np.ndarray]:
    """Treatment probability; scalar for a single covariate vector."""
    single = np.ndim(X) == 1
    p = np.clip(_sigmoid(model.margin(X)), PROBA_CLIP, 1.0 - PROBA_CLIP)
    return float(p[0]) if single else p


def dump_ensemble(model: Ensemble, feature_names=None) -> str:
    """Human-readable tree listing for debugging; not a stable format."""
    lines = [f"base_margin={model.base_margin:.6g} shrinkage={model.shrinkage:g} trees={len(model.trees)}"]

    def name(f):
        return feature_names[f] if feature_names is not None else f"f{f}"

    for k, tree in enumerate(model.trees):
        lines.append(f"tree {k}:")
        stack = [(tree, 0, 0)]
        while stack:
            nd, nid, depth = stack.pop()
            pad = "  " * (depth + 1)
            if isinstance(nd, Leaf):
                lines.append(f"{pad}{nid}: leaf={nd.weight:.6g}")
            else:
                lines.append(f"{pad}{nid}: [{name(nd.feature)} < {nd.threshold:.6g}] gain={nd.gain:.6g}")
                stack.append((nd.right, 2 * nid + 2, depth + 1))
                stack.append((nd.left, 2 * nid + 1, depth + 1))
    return "\n".join(lines)


class BoostedTreeClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn wrapper around :func:`train` for two-class problems.

    The second entry of ``classes_`` is treated as the positive (treated) class.
    """

    def __init__(
        self,
        n_trees=100,
        max_depth=3,
        reg_lambda=1.0,
        gamma=0.0,
        shrinkage=0.1,
        min_child_weight=1.0,
        base_score=0.5,
        subsample=1.0,
        seed=0,
        mode="second_order",
        n_jobs=1,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.shrinkage = shrinkage
        self.min_child_weight = min_child_weight
        self.base_score = base_score
        self.subsample = subsample
        self.seed = seed
        self.mode = mode
        self.n_jobs = n_jobs

    def _params(self) -> BoostParams:
        return BoostParams(**self.get_params())

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_, y01 = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise DegenerateTrainingError(f"need exactly 2 classes, got {self.classes_.size}")
        self.ensemble_ = train(X, y01, self._params())
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "ensemble_")
        X = check_array(X, dtype=float)
        return self.ensemble_.margin(X)

    def predict_proba(self, X):
        check_is_fitted(self, "ensemble_")
        p = predict_proba(self.ensemble_, check_array(X, dtype=float))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] >= 0.5).astype(int)]
