"""Two-sample tests used for balance checks and effect significance.

All tests are two-sided. Samples are plain 1-d float arrays; nothing here
knows about observations or covariates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

__all__ = [
    "TestResult",
    "FiveNumberSummary",
    "ks_statistic",
    "ks_test",
    "kolmogorov_q",
    "ks_exact_p",
    "welch_t_test",
    "t_sf_two_sided",
    "boxplot_summary",
    "ecdf_points",
]

_KS_TERM_EPS = 1e-12
# n_a * n_b at or below which ks_test(method="auto") uses the exact null.
KS_EXACT_MAX_CELLS = 2500


@dataclass(frozen=True)
class TestResult:
    """Outcome of a two-sample test.

    ``df`` is only set for the t-test. ``extreme`` flags the degenerate
    zero-variance t-test, where ``statistic`` is +/-inf (or 0).
    """

    __test__ = False  # keep pytest from collecting this class

    statistic: float
    p_value: float
    df: float | None = None
    extreme: bool = False


class FiveNumberSummary(NamedTuple):
    min: float
    q1: float
    median: float
    q3: float
    max: float


def _as_sample(a, name: str, min_size: int = 1) -> np.ndarray:
    arr = np.asarray(a, dtype=float).ravel()
    if arr.size < min_size:
        raise ValueError(f"sample {name!r} needs at least {min_size} element(s), got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"sample {name!r} contains non-finite values")
    return arr


def ks_statistic(a, b) -> float:
    """Supremum distance between the empirical CDFs of ``a`` and ``b``.

    Both CDFs are right-continuous and evaluated at every pooled sample
    point, so tied values are handled by counting all of them at once.
    """
    a = np.sort(_as_sample(a, "a"))
    b = np.sort(_as_sample(b, "b"))
    points = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, points, side="right") / a.size
    cdf_b = np.searchsorted(b, points, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def kolmogorov_q(lam: float) -> float:
    """Kolmogorov survival function Q(lam) = 2 sum (-1)^(k-1) exp(-2 k^2 lam^2)."""
    if lam <= 0.0:
        return 1.0
    if lam < 1.0:
        # Alternating series converges slowly here; use the theta-function dual,
        # which is the same function and converges in a handful of terms.
        total = 0.0
        k = 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * lam * lam))
            total += term
            if term < _KS_TERM_EPS:
                break
            k += 1
        q = 1.0 - math.sqrt(2.0 * math.pi) / lam * total
    else:
        q = 0.0
        k = 1
        while True:
            term = math.exp(-2.0 * k * k * lam * lam)
            q += 2.0 * term if k % 2 == 1 else -2.0 * term
            if term < _KS_TERM_EPS:
                break
            k += 1
    return min(1.0, max(0.0, q))


def ks_exact_p(a, b, d: float | None = None) -> float:
    """Exact permutation p-value P(D >= d) conditional on the pooled sample.

    Counts label orderings of the sorted pool whose ECDF gap stays below
    ``d`` at every distinct pooled value (lattice-path recursion), so ties
    are treated exactly as the permutation distribution treats them.
    """
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    if d is None:
        d = ks_statistic(a, b)
    na, nb = a.size, b.size
    pooled = np.sort(np.concatenate([a, b]))
    # a checkpoint after position k if the next pooled value differs
    check = np.ones(na + nb + 1, dtype=bool)
    check[1:-1] = pooled[1:] != pooled[:-1]
    tol = 1e-9 / max(na, nb)
    i_idx = np.arange(na + 1)
    # ways[i] = number of admissible paths with i picks from a so far
    ways = np.zeros(na + 1)
    ways[0] = 1.0
    log_scale = 0.0  # ways are kept normalised to avoid overflow
    for k in range(1, na + nb + 1):
        shifted = np.zeros_like(ways)
        shifted[1:] = ways[:-1]
        ways = ways + shifted
        j_idx = k - i_idx
        ways[(j_idx < 0) | (j_idx > nb)] = 0.0
        if check[k]:
            gap = np.abs(i_idx / na - j_idx / nb)
            ways[gap >= d - tol] = 0.0
        total = ways.sum()
        if total == 0.0:
            return 1.0
        ways /= total
        log_scale += math.log(total)
    log_kept = log_scale
    log_total = math.lgamma(na + nb + 1) - math.lgamma(na + 1) - math.lgamma(nb + 1)
    kept = ways[na] * math.exp(log_kept - log_total)
    return min(1.0, max(0.0, 1.0 - kept))


def ks_test(a, b, method: str = "auto") -> TestResult:
    """Two-sample Kolmogorov-Smirnov test.

    ``method="asymptotic"`` uses the Kolmogorov distribution at
    ``lam = D * (sqrt(ne) + 0.12 + 0.11 / sqrt(ne))``, ``ne = na*nb/(na+nb)``.
    ``method="exact"`` uses :func:`ks_exact_p`. ``"auto"`` picks exact when
    ``na * nb <= KS_EXACT_MAX_CELLS``, where the asymptotic form is poor.
    """
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    d = ks_statistic(a, b)
    if method == "auto":
        method = "exact" if a.size * b.size <= KS_EXACT_MAX_CELLS else "asymptotic"
    if method == "exact":
        return TestResult(statistic=d, p_value=1.0 if d == 0.0 else ks_exact_p(a, b, d))
    if method != "asymptotic":
        raise ValueError(f"unknown KS method {method!r}")
    ne = a.size * b.size / (a.size + b.size)
    root = math.sqrt(ne)
    lam = d * (root + 0.12 + 0.11 / root)
    return TestResult(statistic=d, p_value=kolmogorov_q(lam))


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(min(1.0, max(0.0, special.betainc(0.5 * df, 0.5, x))))


def welch_t_test(a, b) -> TestResult:
    """Unequal-variance t-test on the means of ``a`` and ``b``."""
    a = _as_sample(a, "a", min_size=2)
    b = _as_sample(b, "b", min_size=2)
    na, nb = a.size, b.size
    ma, mb = float(np.mean(a)), float(np.mean(b))
    va, vb = float(np.var(a, ddof=1)), float(np.var(b, ddof=1))
    se2 = va / na + vb / nb
    if se2 == 0.0:
        if ma == mb:
            return TestResult(statistic=0.0, p_value=1.0, df=float(na + nb - 2), extreme=True)
        t = math.copysign(math.inf, ma - mb)
        return TestResult(statistic=t, p_value=0.0, df=float(na + nb - 2), extreme=True)
    t = (ma - mb) / math.sqrt(se2)
    df = se2**2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return TestResult(statistic=t, p_value=t_sf_two_sided(t, df), df=df)


def boxplot_summary(a) -> FiveNumberSummary:
    """Min, quartiles and max with linear-interpolation quantiles."""
    a = _as_sample(a, "a")
    q = np.percentile(a, [0, 25, 50, 75, 100])
    return FiveNumberSummary(*(float(v) for v in q))


def ecdf_points(a) -> tuple[list[float], list[float]]:
    """Step points (x, F(x)) of the empirical CDF, one per distinct value."""
    a = np.sort(_as_sample(a, "a"))
    xs, counts = np.unique(a, return_counts=True)
    return xs.tolist(), (np.cumsum(counts) / a.size).tolist()
