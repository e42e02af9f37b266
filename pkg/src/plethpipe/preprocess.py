"""Signal conditioning: derivative statistics, impulse filtering, mean centering.

The impulse filter removes single-sample artifacts (pressure pops, bumps
against the chamber) by thresholding the first difference of the signal. The
replacement loop is sequential and in place: statistics and the difference
sequence are fixed up front, but replacement values read the partially
updated signal, so a replaced sample two positions back feeds the next one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, UsageError


@dataclass(frozen=True)
class DerivativeStats:
    """Population statistics of the first difference of a signal."""

    mean: float
    std: float
    minimum: float
    maximum: float
    n: int


def derivative_stats(s) -> DerivativeStats:
    """Mean/std/min/max of ds_i = s_i - s_{i-1} over the whole signal.

    The std uses the population divisor (n, not n - 1), matching the filter's
    threshold definition. n is the number of differences, len(s) - 1.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.size < 2:
        raise InsufficientDataError("need at least 2 samples for a derivative")
    ds = np.diff(s)
    return DerivativeStats(
        mean=float(ds.mean()),
        std=float(ds.std()),
        minimum=float(ds.min()),
        maximum=float(ds.max()),
        n=int(ds.size),
    )


def sap_filter(s, threshold: float = 9.0, symmetric: bool = False) -> np.ndarray:
    """Filtered copy of ``s`` with detected impulse samples replaced.

    See sap_filter_report for the mechanics; this drops the index report.
    """
    out, _ = sap_filter_report(s, threshold=threshold, symmetric=symmetric)
    return out


def sap_filter_report(s, threshold: float = 9.0, symmetric: bool = False):
    """Impulse filter with a report of which samples actually changed.

    At position i (for 2 <= i <= len(s) - 3, so i - 2 and i + 2 always
    exist), if the forward difference s_{i+1} - s_i exceeds
    mean(ds) + threshold * std(ds), the sample s_i is rewritten to the
    average of s_{i-2} and s_{i+2}. The threshold condition tests the rise
    out of a dip, so single-sample negative impulses are the ones caught;
    the ``symmetric`` variant tests |ds| instead and catches both signs.

    The difference sequence and its statistics come from the original
    signal and are not recomputed as samples are rewritten; replacement
    values read the in-progress signal.

    Args:
        s: input samples.
        threshold: multiple of the derivative std above its mean.
        symmetric: test |ds| >= mean + threshold * std instead.

    Returns:
        (filtered, changed) where ``changed`` holds the indices whose value
        differs from the input. First two and last two samples never change.
    """
    if threshold <= 0:
        raise UsageError("threshold must be positive")
    s = np.asarray(s, dtype=np.float64)
    out = s.copy()
    if s.size < 5:
        return out, np.empty(0, dtype=np.intp)
    ds = np.diff(s)
    level = ds.mean() + threshold * ds.std()
    subject = np.abs(ds) if symmetric else ds
    # ds[i] is s[i+1] - s[i]; candidate positions keep i-2 and i+2 in range
    fired = np.nonzero(subject[2 : s.size - 2] >= level)[0] + 2
    for i in fired:
        out[i] = 0.5 * (out[i - 2] + out[i + 2])
    changed = fired[out[fired] != s[fired]]
    return out, changed


def center(s) -> np.ndarray:
    """Signal minus its mean."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        raise InsufficientDataError("cannot center an empty signal")
    return s - s.mean()
