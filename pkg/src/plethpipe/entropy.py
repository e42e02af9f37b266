"""Approximate entropy of breath waveforms.

ApEn(m, r) = phi(m) - phi(m + 1), where phi(k) averages the log fraction of
length-k templates within Chebyshev distance r of each template
(self-matches included, natural log). phi(0) compares empty templates, which
all match, so it is 0 and ApEn(0, r) = -phi(1, r).

The kernel below shares work across template lengths: the pairwise distance
grid for length k + 1 is the elementwise max of the length-k grid and the
distances of the next sample pair, so one cascade yields every phi(k) up to
a requested order. That makes a whole entropy profile barely more expensive
than its largest single order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, UsageError

# native samples required before a breath gets an entropy profile
MIN_NATIVE_LENGTH = 60

# tolerance r = R_STD_FACTOR x std of the compared samples
R_STD_FACTOR = 0.2

# entropy profiles cover template lengths 0..ENTROPY_MAX_M
ENTROPY_MAX_M = 4


def phi_profile(x, max_k: int, r: float) -> np.ndarray:
    """phi(0), phi(1), ..., phi(max_k) in one cascade.

    Requires len(x) >= max_k + 1 so every order has at least one template.
    """
    x = np.asarray(x, dtype=np.float64)
    if r <= 0:
        raise UsageError("tolerance r must be positive")
    n = x.size
    if n < max_k + 1:
        raise InsufficientDataError(
            f"need at least {max_k + 1} samples for templates of length {max_k}"
        )
    phis = np.empty(max_k + 1)
    phis[0] = 0.0
    grid = np.abs(x[:, None] - x[None, :])
    for k in range(1, max_k + 1):
        if k > 1:
            grid = np.maximum(grid[:-1, :-1], np.abs(x[k - 1 :, None] - x[None, k - 1 :]))
        m_templates = n - k + 1
        counts = np.count_nonzero(grid <= r, axis=1)
        phis[k] = float(np.mean(np.log(counts / m_templates)))
    return phis


def approx_entropy(x, m: int, r: float) -> float:
    """ApEn(m, r) of a sequence; natural log, self-matches included."""
    if m < 0:
        raise UsageError("template length m must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if x.size < m + 2:
        raise InsufficientDataError(
            f"need at least m + 2 = {m + 2} samples, got {x.size}"
        )
    phis = phi_profile(x, m + 1, r)
    return float(phis[m] - phis[m + 1])


@dataclass(frozen=True)
class EntropySet:
    """ApEn at template lengths 0..4 for one breath.

    r_used is the tolerance actually applied (0.2 x std of the compared
    samples); n_used is how many downsampled samples were compared. A flat
    waveform has no usable tolerance; it is returned as all zeros with
    ``degenerate`` set instead of an error so callers can count and move on.
    """

    e0: float
    e1: float
    e2: float
    e3: float
    e4: float
    r_used: float
    n_used: int
    degenerate: bool = False

    def values(self):
        return (self.e0, self.e1, self.e2, self.e3, self.e4)


def entropy_set(waveform, native_length: int) -> EntropySet:
    """Entropy profile of one breath's downsampled waveform.

    Args:
        waveform: downsampled breath samples, zero-padded or not; only the
            stored (unpadded) prefix participates, so the padding the
            database uses for fixed-width rows never biases the result.
        native_length: breath length in native samples; sets the prefix
            length and gates the minimum-size requirement.
    """
    if native_length < MIN_NATIVE_LENGTH:
        raise InsufficientDataError(
            f"breath has {native_length} native samples, "
            f"need {MIN_NATIVE_LENGTH} for an entropy profile"
        )
    waveform = np.asarray(waveform, dtype=np.float64)
    n_used = min(int(np.ceil(native_length / 10)), waveform.size)
    prefix = waveform[:n_used]
    r = R_STD_FACTOR * float(prefix.std())
    if r <= 0:
        return EntropySet(0.0, 0.0, 0.0, 0.0, 0.0, r_used=0.0, n_used=n_used,
                          degenerate=True)
    phis = phi_profile(prefix, ENTROPY_MAX_M + 1, r)
    e = phis[:ENTROPY_MAX_M + 1] - phis[1:ENTROPY_MAX_M + 2]
    return EntropySet(float(e[0]), float(e[1]), float(e[2]), float(e[3]),
                      float(e[4]), r_used=r, n_used=n_used)
