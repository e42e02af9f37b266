"""End-to-end orchestration behind the CLI and service endpoints.

ingest: parse -> impulse filter -> center -> segment -> metrics -> entropy,
streamed into the breath-database CSV in chunks so recordings of 1e8
samples stay within memory. compare: two-category KS or t over every
metric column plus per-category histograms. sigh: detection through
pre/post tables. synth: profile JSON to EDF plus ground-truth CSV.

Every command writes a manifest listing input digests, every threshold in
effect, and the counters accumulated along the way; nothing writes
timestamps, so a rerun on identical inputs is byte-identical.
"""

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .breath_metrics import TR_DECAY_FRACTION, compute_stats
from .entropy import (
    ENTROPY_MAX_M,
    MIN_NATIVE_LENGTH,
    R_STD_FACTOR,
    entropy_set,
)
from .errors import (
    ConfigError,
    DataFormatError,
    InsufficientDataError,
    UsageError,
)
from .preprocess import center, sap_filter_report
from .reports import (
    DB_COLUMNS,
    METRIC_COLUMNS,
    WAVEFORM_COLUMNS,
    RunManifest,
    read_breath_database,
    write_breath_database,
    write_comparison_table,
    write_histograms,
    write_manifest,
    write_position_aggregates,
)
from .segmentation import (
    DECIMATION,
    DURATION_MIN_S,
    WAVEFORM_LEN,
    assemble_candidates,
    build_database,
    default_min_dev_max,
    find_crossings,
    reject_anomalies,
)
from .signal_io import Activity, Gene, parse_edf, serialize_edf
from .sigh_analysis import (
    N_CONTEXT,
    SIGH_DURATION_MIN_S,
    apply_exclusions,
    build_sequences,
    detect_sighs,
    duration_filter,
    load_exclusions,
    load_rest_config,
    position_pools,
    pre_post_compare,
)
from .stats_compare import (
    box_stats,
    comparison_row,
    histogram,
    ks_two_sample,
    t_two_sample,
)
from .synth import generate, load_profile, write_ground_truth_csv

CHUNK_BREATHS = 4096
HISTOGRAM_BINS = 50


@dataclass(frozen=True)
class IngestOptions:
    sap_threshold: float = 9.0
    sap_symmetric: bool = False
    duration_min_s: float = DURATION_MIN_S
    min_dev_max: float = None  # None resolves to -0.05 * std per recording
    channel_label: str = "flow"


def load_labels(path):
    """CSV mapping EDF files to identity labels.

    Columns: file, subject_id, activity, gene. Files match on the exact
    string first, then on basename.
    """
    table = {}
    try:
        frame = pd.read_csv(path, dtype=str)
    except (OSError, ValueError) as e:
        raise DataFormatError(f"cannot read labels file {path}: {e}") from e
    required = ["file", "subject_id", "activity", "gene"]
    if list(frame.columns[:4]) != required:
        raise DataFormatError(
            f"labels file {path} must have columns {','.join(required)}"
        )
    for lineno, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            entry = (
                row.subject_id.strip(),
                Activity(row.activity.strip()),
                Gene(row.gene.strip()),
            )
        except (ValueError, AttributeError) as e:
            raise DataFormatError(
                f"labels file {path} line {lineno}: {e}"
            ) from e
        key = row.file.strip()
        if key in table:
            raise DataFormatError(
                f"labels file {path} line {lineno}: duplicate file {key}"
            )
        table[key] = entry
    return table


def _labels_for(path, labels):
    if labels is None:
        return None
    for key in (str(path), os.path.basename(str(path))):
        if key in labels:
            return labels[key]
    return None


def _process_recording(rec, options, counters, params_out):
    """Yield per-chunk DataFrames of database rows for one recording."""
    filtered, changed = sap_filter_report(
        rec.samples, threshold=options.sap_threshold,
        symmetric=options.sap_symmetric,
    )
    counters["sap_changed"] += int(changed.size)
    s = center(filtered)
    del filtered  # 800 MB at 1e8 samples; the centered copy replaces it

    if options.min_dev_max is None:
        min_dev_max = default_min_dev_max(s)
    else:
        min_dev_max = float(options.min_dev_max)
    params_out.setdefault("min_dev_max_resolved", {})[rec.subject_id] = \
        min_dev_max

    neg, pos = find_crossings(s)
    cands, dropped = assemble_candidates(neg, pos)
    kept, removed = reject_anomalies(
        cands, s, rec.sample_rate_hz,
        duration_min_s=options.duration_min_s, min_dev_max=min_dev_max,
    )
    counters["candidates"] += len(cands)
    counters["spans_without_interior_rise"] += dropped
    counters["anomalies_removed"] += len(removed)
    counters["breaths_kept"] += len(kept)

    for lo in range(0, len(kept), CHUNK_BREATHS):
        batch = kept[lo:lo + CHUNK_BREATHS]
        records, truncated = build_database(
            batch, s, rec.sample_rate_hz, subject_id=rec.subject_id,
            activity=rec.activity, gene=rec.gene,
        )
        counters["waveforms_truncated"] += truncated
        yield _rows_frame(records, s, rec.sample_rate_hz, counters)


def _rows_frame(records, s, rate_hz, counters):
    n = len(records)
    cols = {
        "subject_id": [r.subject_id for r in records],
        "activity": [r.activity.value for r in records],
        "gene": [r.gene.value for r in records],
        "start_time_s": np.array([r.start_time_s for r in records]),
        "end_time_s": np.array([r.end_time_s for r in records]),
        "native_length": np.array([r.native_length for r in records],
                                  dtype=np.int64),
    }
    metric_arrays = {name: np.empty(n) for name in METRIC_COLUMNS}
    wf = np.empty((n, WAVEFORM_LEN))
    for i, r in enumerate(records):
        wf[i] = r.waveform_100hz
        st = compute_stats(r, s, rate_hz)
        metric_arrays["duration_s"][i] = st.duration_s
        metric_arrays["Ti"][i] = st.ti_s
        metric_arrays["Te"][i] = st.te_s
        metric_arrays["Tr"][i] = st.tr_s
        metric_arrays["PIP"][i] = st.pip
        metric_arrays["PEP"][i] = st.pep
        metric_arrays["Pause"][i] = st.pause
        metric_arrays["Penh"][i] = st.penh
        if st.tr_capped:
            counters["tr_capped"] += 1
        if not math.isfinite(st.pause):
            counters["pause_nonfinite"] += 1
        if not math.isfinite(st.penh):
            counters["penh_nonfinite"] += 1

        if r.native_length < MIN_NATIVE_LENGTH:
            counters["entropy_skipped_short"] += 1
            for k in range(ENTROPY_MAX_M + 1):
                metric_arrays[f"E{k}"][i] = math.nan
        else:
            eset = entropy_set(r.waveform_100hz, r.native_length)
            if eset.degenerate:
                counters["entropy_degenerate"] += 1
            for k, v in enumerate(eset.values()):
                metric_arrays[f"E{k}"][i] = v

    for j, name in enumerate(WAVEFORM_COLUMNS):
        cols[name] = wf[:, j]
    cols.update(metric_arrays)
    return pd.DataFrame(cols, columns=DB_COLUMNS)


def _new_counters():
    names = [
        "sap_changed", "candidates", "spans_without_interior_rise",
        "anomalies_removed", "breaths_kept", "waveforms_truncated",
        "tr_capped", "pause_nonfinite", "penh_nonfinite",
        "entropy_skipped_short", "entropy_degenerate",
    ]
    return {k: 0 for k in names}


def ingest(edf_paths, labels_path, out_dir, options=IngestOptions()):
    """Run the full pipeline over EDF files into a breath database."""
    if not edf_paths:
        raise UsageError("no input EDF files given")
    os.makedirs(out_dir, exist_ok=True)
    labels = load_labels(labels_path) if labels_path else None

    manifest = RunManifest(command="ingest")
    for p in edf_paths:
        manifest.add_input(p)
    if labels_path:
        manifest.add_input(labels_path)
    manifest.parameters = {
        "sap_threshold": options.sap_threshold,
        "sap_symmetric": options.sap_symmetric,
        "duration_min_s": options.duration_min_s,
        "min_dev_max": options.min_dev_max,
        "channel_label": options.channel_label,
        "decimation": DECIMATION,
        "waveform_len": WAVEFORM_LEN,
        "entropy_r_std_factor": R_STD_FACTOR,
        "entropy_min_native_length": MIN_NATIVE_LENGTH,
        "tr_decay_fraction": TR_DECAY_FRACTION,
    }

    counters = _new_counters()
    seen_subjects = {}

    def chunks():
        for path in edf_paths:
            try:
                with open(path, "rb") as fh:
                    data = fh.read()
            except OSError as e:
                raise DataFormatError(f"cannot read {path}: {e}") from e
            ids = _labels_for(path, labels)
            try:
                if ids is None:
                    rec = parse_edf(data, options.channel_label)
                else:
                    rec = parse_edf(
                        data, options.channel_label, subject_id=ids[0],
                        activity=ids[1], gene=ids[2],
                    )
            except DataFormatError as e:
                raise DataFormatError(f"{path}: {e}") from e
            del data
            if rec.subject_id in seen_subjects:
                raise DataFormatError(
                    f"{path}: subject {rec.subject_id} already ingested "
                    f"from {seen_subjects[rec.subject_id]}"
                )
            seen_subjects[rec.subject_id] = str(path)
            yield from _process_recording(rec, options, counters,
                                          manifest.parameters)

    db_path = os.path.join(out_dir, "breaths.csv")
    rows = write_breath_database(chunks(), db_path)

    manifest.counters = dict(counters)
    manifest.counters["rows_written"] = rows
    manifest.outputs = ["breaths.csv"]
    manifest_path = os.path.join(out_dir, "ingest_manifest.json")
    write_manifest(manifest, manifest_path)
    return {"database": db_path, "manifest": manifest_path, "rows": rows,
            "counters": manifest.counters}


_COMPARISON_COLUMN = {"activity": "activity", "genetic": "gene"}


def _split_categories(frame, comparison):
    if comparison not in _COMPARISON_COLUMN:
        raise UsageError(
            f"unknown comparison {comparison!r}; pick activity or genetic"
        )
    column = _COMPARISON_COLUMN[comparison]
    cats = sorted(frame[column].unique())
    if len(cats) != 2:
        raise InsufficientDataError(
            f"{comparison} comparison needs exactly two categories in the "
            f"database, found {list(cats)}"
        )
    return column, cats


def _finite(values):
    arr = np.asarray(values, dtype=np.float64)
    return arr[np.isfinite(arr)]


def compare(database_path, comparison, test_name, out_dir,
            bins=HISTOGRAM_BINS, pooled=False):
    """Two-category comparison over every metric column."""
    if test_name not in ("ks", "t"):
        raise UsageError(f"unknown test {test_name!r}; pick ks or t")
    os.makedirs(out_dir, exist_ok=True)
    frame = read_breath_database(database_path)
    column, cats = _split_categories(frame, comparison)

    rows = []
    histograms = {}
    for metric in METRIC_COLUMNS:
        a = _finite(frame.loc[frame[column] == cats[0], metric])
        b = _finite(frame.loc[frame[column] == cats[1], metric])
        if a.size < 2 or b.size < 2:
            raise InsufficientDataError(
                f"metric {metric}: category pools too small "
                f"({cats[0]}: {a.size}, {cats[1]}: {b.size})"
            )
        if test_name == "ks":
            _, p = ks_two_sample(a, b)
        else:
            _, p = t_two_sample(a, b, pooled=pooled)
        rows.append(comparison_row(metric, comparison, "global",
                                   cats[0], a, cats[1], b, p))
        histograms[metric] = {
            cats[0]: histogram(a, bins),
            cats[1]: histogram(b, bins),
        }

    table_path = os.path.join(out_dir, "comparison.csv")
    write_comparison_table(rows, table_path)
    hist_path = os.path.join(out_dir, "histograms.csv")
    write_histograms(histograms, hist_path)

    manifest = RunManifest(command="compare")
    manifest.add_input(database_path)
    manifest.parameters = {
        "comparison": comparison, "test": test_name, "bins": bins,
        "pooled": pooled,
    }
    manifest.counters = {
        "metrics_compared": len(rows),
        "rows_in_database": int(len(frame)),
    }
    manifest.outputs = ["comparison.csv", "histograms.csv"]
    manifest_path = os.path.join(out_dir, "compare_manifest.json")
    write_manifest(manifest, manifest_path)
    return {"table": table_path, "histograms": hist_path,
            "manifest": manifest_path, "rows": rows}


def _sequences_from_db(frame, configs, duration_min_s, counters):
    by_subject = {}
    for subject, group in frame.groupby("subject_id", sort=True):
        by_subject[str(subject)] = group.reset_index(drop=True)

    for subject in configs:
        if subject not in by_subject:
            raise ConfigError(
                f"rest config names unknown subject {subject!r}"
            )

    sequences = []
    breaths_by_subject = {}
    for subject, group in by_subject.items():
        rows = group.to_dict("records")
        breaths_by_subject[subject] = rows
        if subject not in configs:
            continue
        candidates = detect_sighs(rows, configs[subject])
        counters["sighs_detected"] += len(candidates)
        sighs = duration_filter(candidates, rows,
                                min_duration_s=duration_min_s)
        counters["sighs_kept"] += len(sighs)
        sequences.extend(build_sequences(sighs, len(rows), subject))
    return sequences, breaths_by_subject


def sigh(database_path, rest_config_path, out_dir, exclusions_path=None,
         context_depth=N_CONTEXT, sigh_duration_min=SIGH_DURATION_MIN_S,
         pooled=False):
    """Sigh detection, sequence aggregates, and pre/post tables."""
    os.makedirs(out_dir, exist_ok=True)
    frame = read_breath_database(database_path)
    configs = load_rest_config(rest_config_path)

    counters = {"sighs_detected": 0, "sighs_kept": 0,
                "sequences_excluded": 0, "exclusions_unmatched": 0}
    sequences, breaths_by_subject = _sequences_from_db(
        frame, configs, sigh_duration_min, counters,
    )

    if exclusions_path:
        exclusions = load_exclusions(exclusions_path)
        sequences, unmatched = apply_exclusions(sequences, exclusions)
        counters["sequences_excluded"] = sum(s.excluded for s in sequences)
        counters["exclusions_unmatched"] = len(unmatched)

    agg_path = os.path.join(out_dir, "position_aggregates.csv")
    table_path = os.path.join(out_dir, "sigh_comparison.csv")
    rows = []
    if not [s for s in sequences if not s.excluded]:
        warnings.warn("no sigh sequences detected; tables are empty")
        write_position_aggregates({}, agg_path)
        write_comparison_table([], table_path)
    else:
        aggregates = {}
        for metric in METRIC_COLUMNS:
            pools = position_pools(sequences, metric, breaths_by_subject)
            aggregates[metric] = [
                (len(p), box_stats(p) if p else None) for p in pools
            ]
        write_position_aggregates(aggregates, agg_path)

        labels_all = {
            "activity": {
                s: rows_[0]["activity"]
                for s, rows_ in breaths_by_subject.items()
            },
            "genetic": {
                s: rows_[0]["gene"]
                for s, rows_ in breaths_by_subject.items()
            },
        }
        seq_subjects = {s.subject_id for s in sequences}
        active_subjects = {s.subject_id for s in sequences if not s.excluded}
        for comparison in ("activity", "genetic"):
            labels = {s: v for s, v in labels_all[comparison].items()
                      if s in seq_subjects}
            if len({labels[s] for s in active_subjects}) != 2:
                warnings.warn(
                    f"{comparison} comparison skipped: sigh sequences do "
                    f"not span two categories"
                )
                continue
            for metric in METRIC_COLUMNS:
                pre, post, _ = pre_post_compare(
                    sequences, metric, comparison, breaths_by_subject,
                    labels, context_depth=context_depth, pooled=pooled,
                )
                rows.extend([pre, post])
        write_comparison_table(rows, table_path)

    manifest = RunManifest(command="sigh")
    manifest.add_input(database_path)
    manifest.add_input(rest_config_path)
    if exclusions_path:
        manifest.add_input(exclusions_path)
    manifest.parameters = {
        "sigh_duration_min_s": sigh_duration_min,
        "context_depth": context_depth,
        "pooled": pooled,
        "pep_thresholds": {
            s: configs[s].pep_threshold for s in sorted(configs)
        },
    }
    manifest.counters = counters
    manifest.outputs = ["position_aggregates.csv", "sigh_comparison.csv"]
    manifest_path = os.path.join(out_dir, "sigh_manifest.json")
    write_manifest(manifest, manifest_path)
    return {"aggregates": agg_path, "table": table_path,
            "manifest": manifest_path, "rows": rows, "counters": counters}


def synth_run(profile_path, out_edf, out_truth, out_dir=None,
              channel_label="flow"):
    """Generate a profile into an EDF plus its ground-truth CSV."""
    profile = load_profile(profile_path)
    rec, truth = generate(profile)
    payload = serialize_edf(rec, channel_label=channel_label)
    with open(out_edf, "wb") as fh:
        fh.write(payload)
    write_ground_truth_csv(truth, out_truth)

    manifest = RunManifest(command="synth")
    manifest.add_input(profile_path)
    manifest.parameters = {"channel_label": channel_label,
                           "seed": profile.seed}
    manifest.counters = {
        "samples": len(rec.samples),
        "breaths": len(truth.breaths),
        "sighs": len(truth.sigh_numbers()),
        "impulses": len(truth.impulse_indices),
    }
    manifest.outputs = [os.path.basename(str(out_edf)),
                        os.path.basename(str(out_truth))]
    manifest_dir = out_dir or os.path.dirname(os.path.abspath(str(out_edf)))
    os.makedirs(manifest_dir, exist_ok=True)
    manifest_path = os.path.join(manifest_dir, "synth_manifest.json")
    write_manifest(manifest, manifest_path)
    return {"edf": str(out_edf), "truth": str(out_truth),
            "manifest": manifest_path, "breaths": len(truth.breaths)}
