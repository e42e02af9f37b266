"""Sigh detection and the surrounding 21-breath sequence analysis.

A sigh is a breath inside one of a subject's configured rest windows whose
PEP meets that subject's threshold, kept only if it lasts at least 1.1 s.
Each sigh anchors a sequence of 21 slots: positions 1-10 are the breaths
before it, position 11 the sigh itself, 12-21 the breaths after. Slots
falling off either end of the recording stay absent; they are never
zero-filled. Sequences can be excluded through a reviewable CSV file, the
replacement for case-by-case manual vetting.

Rest windows are half-open [start, end) in 0-based breath numbers. A
config may give windows in seconds instead; those are resolved against
breath start times before detection.

Breaths are passed in as mappings (the breath-database row shape), one
ordered list per subject, keyed by the column names "PEP", "duration_s"
and whatever metric the caller aggregates.
"""

import bisect
import csv
import json
import math
import warnings
from dataclasses import dataclass, replace

from .errors import ConfigError, DataFormatError, InsufficientDataError
from .stats_compare import box_stats, comparison_row, sigh_impact, t_two_sample

SIGH_DURATION_MIN_S = 1.1
N_CONTEXT = 10
SLOT_COUNT = 2 * N_CONTEXT + 1
SIGH_SLOT = N_CONTEXT + 1  # 1-based position of the sigh itself


@dataclass(frozen=True)
class RestWindowConfig:
    subject_id: str
    windows: tuple  # (start, end) pairs, unit per the unit field
    pep_threshold: float
    unit: str = "breaths"


@dataclass(frozen=True)
class SighSequence:
    subject_id: str
    sigh_breath_number: int
    slots: tuple  # SLOT_COUNT entries: breath number or None
    # 1-based slot positions (other than the center) holding another sigh
    sigh_slot_positions: tuple = ()
    excluded: bool = False


def load_rest_config(path):
    """Read {subject: {windows, pep_threshold[, unit]}} from JSON."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read rest config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"rest config {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"rest config {path} must map subject ids to entries")
    configs = {}
    for subject, entry in raw.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"rest config entry for {subject} must be an object")
        unknown = set(entry) - {"windows", "pep_threshold", "unit"}
        if unknown:
            raise ConfigError(
                f"rest config entry for {subject} has unknown keys {sorted(unknown)}"
            )
        try:
            windows = tuple(
                (float(a), float(b)) for a, b in entry["windows"]
            )
            threshold = float(entry["pep_threshold"])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(
                f"rest config entry for {subject} needs windows as (start, end) "
                f"pairs and a pep_threshold: {e}"
            ) from e
        unit = entry.get("unit", "breaths")
        if unit not in ("breaths", "seconds"):
            raise ConfigError(
                f"rest config entry for {subject}: unit must be breaths or seconds"
            )
        _check_windows(subject, windows)
        if threshold <= 0:
            raise ConfigError(
                f"rest config entry for {subject}: pep_threshold must be positive"
            )
        configs[subject] = RestWindowConfig(
            subject_id=subject, windows=windows, pep_threshold=threshold,
            unit=unit,
        )
    return configs


def _check_windows(subject, windows):
    for a, b in windows:
        if not (0 <= a < b):
            raise ConfigError(
                f"rest config entry for {subject}: window ({a}, {b}) not ordered"
            )
    spans = sorted(windows)
    for (_, e1), (s2, _) in zip(spans[:-1], spans[1:]):
        if s2 < e1:
            raise ConfigError(
                f"rest config entry for {subject}: windows overlap at {s2}"
            )


def resolve_windows(config: RestWindowConfig, breaths):
    """Return the config's windows as half-open breath-number spans."""
    n = len(breaths)
    if config.unit == "seconds":
        starts = [float(b["start_time_s"]) for b in breaths]
        out = []
        for a_s, b_s in config.windows:
            lo = _first_at_or_after(starts, a_s)
            hi = _first_at_or_after(starts, b_s)
            if lo == hi:
                continue  # no breath starts inside this window
            out.append((lo, hi))
        windows = tuple(out)
    else:
        windows = tuple((int(a), int(b)) for a, b in config.windows)
    for lo, hi in windows:
        if lo >= n or hi > n:
            raise ConfigError(
                f"rest window ({lo}, {hi}) for {config.subject_id} lies "
                f"outside the {n}-breath recording"
            )
    return windows


def _first_at_or_after(sorted_values, x):
    return bisect.bisect_left(sorted_values, x)


def detect_sighs(breaths, config: RestWindowConfig):
    """Breath numbers inside a rest window with PEP at or above threshold."""
    windows = resolve_windows(config, breaths)
    hits = []
    for lo, hi in sorted(windows):
        for i in range(lo, hi):
            if float(breaths[i]["PEP"]) >= config.pep_threshold:
                hits.append(i)
    return hits


def duration_filter(candidates, breaths, min_duration_s=SIGH_DURATION_MIN_S):
    """Keep candidates lasting at least min_duration_s (inclusive)."""
    return [
        c for c in candidates
        if float(breaths[c]["duration_s"]) >= min_duration_s
    ]


def build_sequences(sigh_numbers, breath_count, subject_id,
                    n_context=N_CONTEXT):
    """One sequence per sigh; off-record slots absent, sigh neighbors flagged."""
    sigh_set = set(sigh_numbers)
    sequences = []
    for sigh in sorted(sigh_numbers):
        slots = []
        flagged = []
        for pos in range(1, 2 * n_context + 2):
            num = sigh + (pos - (n_context + 1))
            if 0 <= num < breath_count:
                slots.append(num)
                if num in sigh_set and pos != n_context + 1:
                    flagged.append(pos)
            else:
                slots.append(None)
        sequences.append(SighSequence(
            subject_id=subject_id,
            sigh_breath_number=sigh,
            slots=tuple(slots),
            sigh_slot_positions=tuple(flagged),
        ))
    return sequences


def load_exclusions(path):
    """Parse the exclusion CSV: subject_id, sigh_breath_number, reason."""
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise DataFormatError(f"cannot read exclusion file {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if [c.strip() for c in row[:2]] != ["subject_id",
                                                    "sigh_breath_number"]:
                    raise DataFormatError(
                        f"exclusion file line 1: expected header "
                        f"subject_id,sigh_breath_number,reason"
                    )
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DataFormatError(
                    f"exclusion file line {lineno}: need at least "
                    f"subject_id and sigh_breath_number"
                )
            try:
                number = int(row[1])
            except ValueError as e:
                raise DataFormatError(
                    f"exclusion file line {lineno}: breath number "
                    f"{row[1]!r} is not an integer"
                ) from e
            reason = row[2].strip() if len(row) > 2 else ""
            rows.append((row[0].strip(), number, reason))
    return rows


def apply_exclusions(sequences, exclusions):
    """Mark listed (subject, sigh) pairs excluded; warn on unmatched pairs."""
    keys = {(s.subject_id, s.sigh_breath_number) for s in sequences}
    wanted = {(subj, num) for subj, num, _ in exclusions}
    unmatched = sorted(wanted - keys)
    for subj, num in unmatched:
        warnings.warn(
            f"exclusion ({subj}, {num}) matches no detected sigh sequence",
            stacklevel=2,
        )
    out = [
        replace(s, excluded=True)
        if (s.subject_id, s.sigh_breath_number) in wanted else s
        for s in sequences
    ]
    return out, unmatched


def _slot_values(sequences, metric_name, breaths_by_subject, positions):
    """Finite metric values found at the given 1-based slot positions."""
    values = []
    for seq in sequences:
        if seq.excluded:
            continue
        rows = breaths_by_subject[seq.subject_id]
        for pos in positions:
            num = seq.slots[pos - 1]
            if num is None:
                continue
            v = float(rows[num][metric_name])
            if math.isfinite(v):
                values.append(v)
    return values


def position_pools(sequences, metric_name, breaths_by_subject):
    """Metric values per slot position 1..21 over non-excluded sequences."""
    active = [s for s in sequences if not s.excluded]
    if not active:
        raise InsufficientDataError(
            "no sigh sequences left to aggregate after exclusions"
        )
    return [
        _slot_values(active, metric_name, breaths_by_subject, [pos])
        for pos in range(1, SLOT_COUNT + 1)
    ]


def position_aggregates(sequences, metric_name, breaths_by_subject):
    """box_stats per slot position 1..21 over all non-excluded sequences."""
    return [
        box_stats(pool) if pool else None
        for pool in position_pools(sequences, metric_name, breaths_by_subject)
    ]


def _positions(phase, context_depth):
    if phase == "pre_sigh":
        return range(SIGH_SLOT - context_depth, SIGH_SLOT)
    return range(SIGH_SLOT + 1, SIGH_SLOT + 1 + context_depth)


def pre_post_compare(sequences, metric_name, comparison_type,
                     breaths_by_subject, labels_by_subject,
                     context_depth=N_CONTEXT, pooled=False):
    """Two-category t-test before and after the sigh, plus the p shift.

    labels_by_subject maps subject_id to its category label for the chosen
    comparison. Returns (pre_row, post_row, signed_impact); the rows carry
    the absolute impact, the signed pre-minus-post difference is returned
    alongside.
    """
    if not 1 <= context_depth <= N_CONTEXT:
        raise ConfigError(
            f"context depth must lie in 1..{N_CONTEXT}, got {context_depth}"
        )
    cats = sorted(set(labels_by_subject.values()))
    if len(cats) != 2:
        raise InsufficientDataError(
            f"{comparison_type} comparison needs exactly two categories, "
            f"found {cats}"
        )
    cat1, cat2 = cats

    p_values = {}
    pools = {}
    for phase in ("pre_sigh", "post_sigh"):
        positions = list(_positions(phase, context_depth))
        samples = {}
        for cat in (cat1, cat2):
            seqs = [
                s for s in sequences
                if labels_by_subject[s.subject_id] == cat
            ]
            vals = _slot_values(seqs, metric_name, breaths_by_subject,
                                positions)
            if len(vals) < 2:
                raise InsufficientDataError(
                    f"{phase} pool for category {cat} has too few breaths"
                )
            samples[cat] = vals
        _, p = t_two_sample(samples[cat1], samples[cat2], pooled=pooled)
        p_values[phase] = p
        pools[phase] = samples

    impact = sigh_impact(p_values["pre_sigh"], p_values["post_sigh"])
    pre_row = comparison_row(
        metric_name, comparison_type, "pre_sigh",
        cat1, pools["pre_sigh"][cat1], cat2, pools["pre_sigh"][cat2],
        p_values["pre_sigh"],
    )
    post_row = comparison_row(
        metric_name, comparison_type, "post_sigh",
        cat1, pools["post_sigh"][cat1], cat2, pools["post_sigh"][cat2],
        p_values["post_sigh"], impact=impact,
    )
    signed = p_values["pre_sigh"] - p_values["post_sigh"]
    return pre_row, post_row, signed
