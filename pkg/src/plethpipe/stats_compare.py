"""Distribution comparison: KS and t tests, summaries, histogram and box data.

The KS statistic is computed exactly by a sorted-merge sweep. Its p-value
uses the asymptotic series with the small-sample lambda correction
(sqrt(ne) + 0.12 + 0.11/sqrt(ne)); an exact enumeration is also provided for
small samples so the approximation can be checked where enumeration is
feasible. The t-test defaults to the unequal-variance (Welch) form.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .errors import InsufficientDataError, UsageError

# absolute size below which a series term no longer contributes
_KS_TERM_EPS = 1e-16


def _as_sample(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be one-dimensional")
    if arr.size == 0:
        raise InsufficientDataError(f"{name} is empty")
    return arr


def ks_two_sample(a, b):
    """Two-sample KS test.

    Returns:
        (d, p): d is sup |ECDF_a - ECDF_b|, exact; p is the asymptotic
        survival probability, clamped to [0, 1]. Identical samples give
        (0.0, 1.0).
    """
    a = np.sort(_as_sample(a, "a"))
    b = np.sort(_as_sample(b, "b"))
    d = _ks_d_sorted(a, b)
    ne = a.size * b.size / (a.size + b.size)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * d
    return d, _ks_p_from_lambda(lam)


def _ks_d_sorted(a, b):
    """sup ECDF distance by merging two sorted samples.

    The distance is evaluated after consuming every tie at a value, so tied
    observations within or across samples are handled exactly.
    """
    na, nb = a.size, b.size
    ia = ib = 0
    d = 0.0
    while ia < na or ib < nb:
        if ib >= nb or (ia < na and a[ia] <= b[ib]):
            v = a[ia]
        else:
            v = b[ib]
        while ia < na and a[ia] == v:
            ia += 1
        while ib < nb and b[ib] == v:
            ib += 1
        gap = abs(ia / na - ib / nb)
        if gap > d:
            d = gap
    return d


def _ks_p_from_lambda(lam):
    if lam < 1e-8:
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        if abs(term) < _KS_TERM_EPS:
            break
        total += term
        k += 1
    return min(1.0, max(0.0, total))


def ks_exact_p(a, b):
    """Exact two-sample KS p-value by lattice-path counting.

    Under the null every interleaving of the two samples is equally likely;
    this counts, with integer arithmetic, the interleavings whose ECDF
    distance reaches the observed one. Requires all pooled values distinct
    (ties break the equal-likelihood argument). Cost grows with the product
    of the sample sizes, so this is meant for small samples, where it serves
    as ground truth for the asymptotic p.
    """
    a = np.sort(_as_sample(a, "a"))
    b = np.sort(_as_sample(b, "b"))
    na, nb = int(a.size), int(b.size)
    pooled = np.concatenate([a, b])
    if np.unique(pooled).size != pooled.size:
        raise UsageError("exact enumeration requires all pooled values distinct")
    # observed sup distance as an integer numerator over na*nb
    ia = ib = 0
    k_obs = 0
    merged = np.sort(pooled)
    for v in merged:
        if ia < na and a[ia] == v:
            ia += 1
        else:
            ib += 1
        k_obs = max(k_obs, abs(ia * nb - ib * na))
    # count paths (0,0) -> (na,nb) that never reach |i*nb - j*na| >= k_obs
    counts = [[0] * (nb + 1) for _ in range(na + 1)]
    counts[0][0] = 1
    for i in range(na + 1):
        for j in range(nb + 1):
            if i == 0 and j == 0:
                continue
            if abs(i * nb - j * na) >= k_obs:
                counts[i][j] = 0
                continue
            c = 0
            if i > 0:
                c += counts[i - 1][j]
            if j > 0:
                c += counts[i][j - 1]
            counts[i][j] = c
    below = counts[na][nb]
    total = math.comb(na + nb, na)
    return (total - below) / total


def t_two_sample(a, b, pooled: bool = False):
    """Two-sided two-sample t-test, unequal variances by default.

    Returns:
        (t, p) with p from the regularized incomplete beta of the t
        distribution at Welch-Satterthwaite (or pooled) degrees of freedom.
        Two zero-variance samples with equal means give (0.0, 1.0).
    """
    a = _as_sample(a, "a")
    b = _as_sample(b, "b")
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise InsufficientDataError("need at least 2 observations per sample")
    ma, mb = float(a.mean()), float(b.mean())
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        if ma == mb:
            return 0.0, 1.0
        raise InsufficientDataError(
            "both samples have zero variance with unequal means"
        )
    if pooled:
        sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
        df = float(na + nb - 2)
    else:
        q = va / na + vb / nb
        se = math.sqrt(q)
        df = q * q / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    t = (ma - mb) / se
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, min(1.0, max(0.0, p))


def summarize(x):
    """(mean, sample std). A single observation reports std 0."""
    x = _as_sample(x, "sample")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1))


def histogram(x, bins: int):
    """(edges, counts); counts total the sample size."""
    if bins < 1:
        raise UsageError("bin count must be >= 1")
    x = _as_sample(x, "sample")
    counts, edges = np.histogram(x, bins=bins)
    return edges, counts


@dataclass(frozen=True)
class BoxStats:
    """Quartiles plus 1.5 IQR whiskers and the points beyond them."""

    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple


def box_stats(x) -> BoxStats:
    x = _as_sample(x, "sample")
    q1, med, q3 = (float(v) for v in np.percentile(x, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    lo_limit = q1 - 1.5 * iqr
    hi_limit = q3 + 1.5 * iqr
    inside = x[(x >= lo_limit) & (x <= hi_limit)]
    # whiskers sit on the most extreme observations still inside the fences
    whisker_low = float(inside.min()) if inside.size else q1
    whisker_high = float(inside.max()) if inside.size else q3
    outliers = tuple(float(v) for v in np.sort(x[(x < lo_limit) | (x > hi_limit)]))
    return BoxStats(med, q1, q3, whisker_low, whisker_high, outliers)


def sigh_impact(p_pre: float, p_post: float) -> float:
    """Absolute change in p-value across the sigh; sign belongs to the caller."""
    return abs(p_pre - p_post)


COMPARISON_TYPES = ("activity", "genetic")
PHASES = ("pre_sigh", "post_sigh", "global")

# column order for emitted comparison tables
COMPARISON_COLUMNS = [
    "metric_name", "comparison_type", "phase", "cat1_label", "cat2_label",
    "cat1_mean", "cat1_std", "cat2_mean", "cat2_std", "means_difference",
    "p_value", "sigh_impact",
]


@dataclass(frozen=True)
class ComparisonRow:
    """One emitted comparison-table line; sigh_impact only after the sigh."""

    metric_name: str
    comparison_type: str
    phase: str
    cat1_label: str
    cat2_label: str
    cat1_mean: float
    cat1_std: float
    cat2_mean: float
    cat2_std: float
    means_difference: float
    p_value: float
    sigh_impact: float = None

    def __post_init__(self):
        if self.comparison_type not in COMPARISON_TYPES:
            raise UsageError(
                f"comparison_type must be one of {COMPARISON_TYPES}, "
                f"got {self.comparison_type!r}"
            )
        if self.phase not in PHASES:
            raise UsageError(f"phase must be one of {PHASES}, got {self.phase!r}")
        if not 0.0 <= self.p_value <= 1.0:
            raise UsageError(f"p_value {self.p_value} outside [0, 1]")
        if self.sigh_impact is not None and self.phase != "post_sigh":
            raise UsageError("sigh_impact belongs on post_sigh rows only")


def comparison_row(metric_name, comparison_type, phase, cat1_label, a,
                   cat2_label, b, p_value, impact=None) -> ComparisonRow:
    """Assemble a row from two category samples and a computed p-value."""
    m1, s1 = summarize(a)
    m2, s2 = summarize(b)
    return ComparisonRow(
        metric_name=metric_name,
        comparison_type=comparison_type,
        phase=phase,
        cat1_label=cat1_label,
        cat2_label=cat2_label,
        cat1_mean=m1,
        cat1_std=s1,
        cat2_mean=m2,
        cat2_std=s2,
        means_difference=m1 - m2,
        p_value=p_value,
        sigh_impact=impact,
    )
