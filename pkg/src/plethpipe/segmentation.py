"""Breath segmentation: zero crossings, candidate assembly, anomaly merging.

A breath runs from one negative-going zero crossing of the mean-centered
flow signal to the next, with the first positive-going crossing strictly
inside marking the inspiration/expiration split. Noise near zero and motion
artifacts create divisions that split real breaths, so candidates that are
too short or never dip properly negative are treated as false divisions:
removing such a division folds the candidate into the breath before it.
The scan repeats until every kept candidate passes, so cascades of noise
fragments collapse into their parent breath one division at a time.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .signal_io import Activity, Gene

DECIMATION = 10
WAVEFORM_LEN = 400
# anomaly thresholds: breaths shorter than this duration, or whose deepest
# point sits above this fraction of the signal std (i.e. never really dips
# negative), are false divisions
DURATION_MIN_S = 0.15
MIN_DEV_STD_FACTOR = -0.05


@dataclass(frozen=True)
class BreathCandidate:
    """Half-open sample span [start, end) with the expiration onset inside."""

    start: int
    insp_end: int
    end: int


@dataclass(frozen=True)
class BreathRecord:
    """One kept breath with its provenance and fixed-width waveform."""

    subject_id: str
    activity: Activity
    gene: Gene
    start_index: int
    insp_end_index: int
    end_index: int
    start_time_s: float
    end_time_s: float
    native_length: int
    waveform_100hz: np.ndarray


def find_crossings(s):
    """Indices of negative-going and positive-going zero crossings.

    A negative crossing at i means s[i-1] >= 0 and s[i] < 0; positive means
    s[i-1] <= 0 and s[i] > 0. Exact zeros therefore belong to the side they
    came from, and a crossing index is the first sample on the new side.
    """
    s = np.asarray(s, dtype=np.float64)
    prev, cur = s[:-1], s[1:]
    neg = np.nonzero((prev >= 0) & (cur < 0))[0] + 1
    pos = np.nonzero((prev <= 0) & (cur > 0))[0] + 1
    return neg, pos


def assemble_candidates(neg, pos):
    """Pair consecutive negative crossings into breath candidates.

    Each span keeps the first positive crossing strictly inside as its
    inspiration end; spans with none (the signal never surfaced) are not
    breaths and are dropped.

    Returns:
        (candidates, dropped): candidates in time order, and how many spans
        had no interior positive crossing.
    """
    neg = np.asarray(neg, dtype=np.int64)
    pos = np.asarray(pos, dtype=np.int64)
    candidates = []
    dropped = 0
    if neg.size < 2:
        return candidates, dropped
    # first positive crossing strictly after each negative crossing
    insp_idx = np.searchsorted(pos, neg[:-1], side="right")
    for k in range(neg.size - 1):
        start, end = int(neg[k]), int(neg[k + 1])
        j = insp_idx[k]
        if j < pos.size and pos[j] < end:
            candidates.append(BreathCandidate(start, int(pos[j]), end))
        else:
            dropped += 1
    return candidates, dropped


def anomaly_features(candidate, s, rate_hz):
    """(duration_s, min_deviation) of a candidate on the centered signal."""
    s = np.asarray(s, dtype=np.float64)
    duration = (candidate.end - candidate.start) / rate_hz
    min_dev = float(s[candidate.start : candidate.end].min())
    return duration, min_dev


def default_min_dev_max(s) -> float:
    """Anomaly depth threshold derived from the signal: -0.05 of its std."""
    return MIN_DEV_STD_FACTOR * float(np.asarray(s, dtype=np.float64).std())


def reject_anomalies(candidates, s, rate_hz, duration_min_s=DURATION_MIN_S,
                     min_dev_max=None):
    """Drop false divisions by folding anomalous candidates into their
    predecessor.

    A candidate is anomalous when duration_s < duration_min_s OR
    min_deviation > min_dev_max. The earliest anomalous candidate loses its
    starting division: the previous candidate absorbs its span (duration and
    depth update in O(1) since spans are contiguous). An anomalous first
    candidate has no predecessor and is dropped outright. Repeats until no
    anomalous candidate remains, so merged spans are re-judged with their
    new features.

    Args:
        candidates: contiguous candidates from assemble_candidates.
        s: the centered signal the candidates index into.
        rate_hz: native sampling rate.
        duration_min_s: minimum breath duration in seconds.
        min_dev_max: maximum allowed deepest value; defaults to
            -0.05 * std(s).

    Returns:
        (kept, removed): kept BreathCandidates in time order, and the
        candidates that were folded away or dropped, as they were when
        removed.
    """
    s = np.asarray(s, dtype=np.float64)
    if rate_hz <= 0:
        raise UsageError("rate must be positive")
    if min_dev_max is None:
        min_dev_max = default_min_dev_max(s)
    if not candidates:
        return [], []
    starts = np.array([c.start for c in candidates], dtype=np.int64)
    ends = np.array([c.end for c in candidates], dtype=np.int64)
    insp = [c.insp_end for c in candidates]
    contiguous = bool(np.all(starts[1:] == ends[:-1]))
    if contiguous:
        mins = np.minimum.reduceat(s[: ends[-1]], starts)
    else:
        mins = np.array([s[a:b].min() for a, b in zip(starts, ends)])

    spans = [
        [int(starts[k]), insp[k], int(ends[k]), float(mins[k])]
        for k in range(len(candidates))
    ]
    removed = []

    def anomalous(span):
        duration = (span[2] - span[0]) / rate_hz
        return duration < duration_min_s or span[3] > min_dev_max

    k = 0
    while k < len(spans):
        if not anomalous(spans[k]):
            k += 1
            continue
        start, insp_end, end, lo = spans.pop(k)
        removed.append(BreathCandidate(start, insp_end, end))
        if k == 0:
            continue  # no predecessor to absorb it
        prev = spans[k - 1]
        prev[2] = end
        prev[3] = min(prev[3], lo)
        k -= 1  # re-judge the absorber with its new span
    kept = [BreathCandidate(a, i, b) for a, i, b, _ in spans]
    return kept, removed


def build_database(kept, s, rate_hz, subject_id, activity, gene,
                   decimation=DECIMATION, waveform_len=WAVEFORM_LEN):
    """Materialize kept candidates as breath records.

    The stored waveform takes every ``decimation``-th native sample from the
    breath start, zero-padded to ``waveform_len``; longer breaths are
    truncated and counted.

    Returns:
        (records, truncated): records in time order and how many waveforms
        were cut at ``waveform_len``.
    """
    s = np.asarray(s, dtype=np.float64)
    records = []
    truncated = 0
    for c in kept:
        native = c.end - c.start
        dec = s[c.start : c.end : decimation]
        if dec.size > waveform_len:
            dec = dec[:waveform_len]
            truncated += 1
        waveform = np.zeros(waveform_len)
        waveform[: dec.size] = dec
        records.append(
            BreathRecord(
                subject_id=subject_id,
                activity=activity,
                gene=gene,
                start_index=c.start,
                insp_end_index=c.insp_end,
                end_index=c.end,
                start_time_s=c.start / rate_hz,
                end_time_s=c.end / rate_hz,
                native_length=native,
                waveform_100hz=waveform,
            )
        )
    return records, truncated
