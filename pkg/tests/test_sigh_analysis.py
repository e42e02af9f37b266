"""Sigh detection, sequence building, exclusions, pre/post comparison."""

import json
import math

import numpy as np
import pytest

from plethpipe.errors import (
    ConfigError,
    DataFormatError,
    InsufficientDataError,
)
from plethpipe.sigh_analysis import (
    N_CONTEXT,
    SIGH_SLOT,
    SLOT_COUNT,
    RestWindowConfig,
    apply_exclusions,
    build_sequences,
    detect_sighs,
    duration_filter,
    load_exclusions,
    load_rest_config,
    position_aggregates,
    pre_post_compare,
    resolve_windows,
)


def mk_rows(peps, duration=0.5, start_step=0.5, **metrics):
    rows = []
    for i, pep in enumerate(peps):
        row = {"PEP": pep, "duration_s": duration,
               "start_time_s": i * start_step}
        for name, vals in metrics.items():
            row[name] = vals[i]
        rows.append(row)
    return rows


def cfg(windows, threshold=1.0, unit="breaths", subject="r1"):
    return RestWindowConfig(subject_id=subject, windows=tuple(windows),
                            pep_threshold=threshold, unit=unit)


def test_load_rest_config_round_trip(tmp_path):
    path = tmp_path / "rest.json"
    path.write_text(json.dumps({
        "r1": {"windows": [[0, 50], [80, 120]], "pep_threshold": 2.5},
        "r2": {"windows": [[10.0, 42.5]], "pep_threshold": 1.75,
               "unit": "seconds"},
    }))
    configs = load_rest_config(path)
    assert configs["r1"].windows == ((0.0, 50.0), (80.0, 120.0))
    assert configs["r1"].unit == "breaths"
    assert configs["r2"].pep_threshold == 1.75
    assert configs["r2"].unit == "seconds"


@pytest.mark.parametrize("entry", [
    {"windows": [[5, 2]], "pep_threshold": 1.0},          # reversed window
    {"windows": [[0, 10], [5, 15]], "pep_threshold": 1.0},  # overlap
    {"windows": [[0, 10]], "pep_threshold": -1.0},        # bad threshold
    {"windows": [[0, 10]], "pep_threshold": 1.0, "unit": "fortnights"},
    {"windows": [[0, 10]], "pep_threshold": 1.0, "color": "red"},
])
def test_load_rest_config_rejects_bad_entries(tmp_path, entry):
    path = tmp_path / "rest.json"
    path.write_text(json.dumps({"r1": entry}))
    with pytest.raises(ConfigError):
        load_rest_config(path)


def test_resolve_windows_in_breath_numbers():
    rows = mk_rows([1.0] * 10)
    assert resolve_windows(cfg([(2, 7)]), rows) == ((2, 7),)
    with pytest.raises(ConfigError):
        resolve_windows(cfg([(3, 99)]), rows)
    with pytest.raises(ConfigError):
        resolve_windows(cfg([(10, 12)]), rows)


def test_resolve_windows_in_seconds():
    # breaths start at 0.0, 0.5, 1.0, ... ; [1.0, 2.0) covers numbers 2-3
    rows = mk_rows([1.0] * 10)
    got = resolve_windows(cfg([(1.0, 2.0)], unit="seconds"), rows)
    assert got == ((2, 4),)
    # a sliver between two breath starts selects nothing and is dropped
    assert resolve_windows(cfg([(0.6, 0.9)], unit="seconds"), rows) == ()


def test_detect_sighs_respects_windows_and_threshold():
    peps = [0.5, 3.0, 0.5, 3.0, 2.0, 0.5, 3.0, 0.5]
    rows = mk_rows(peps)
    got = detect_sighs(rows, cfg([(2, 6)], threshold=2.0))
    assert got == [3, 4]  # 3.0 and the exact-threshold 2.0, both in window
    assert detect_sighs(rows, cfg([(2, 6)], threshold=99.0)) == []


def test_duration_filter_boundary_is_inclusive():
    rows = mk_rows([1.0, 1.0, 1.0])
    rows[0]["duration_s"] = 1.0
    rows[1]["duration_s"] = 1.1
    rows[2]["duration_s"] = 1.3
    assert duration_filter([0, 1, 2], rows) == [1, 2]


def test_build_sequences_mid_record():
    seqs = build_sequences([50], breath_count=200, subject_id="r1")
    (seq,) = seqs
    assert len(seq.slots) == SLOT_COUNT
    assert seq.slots[SIGH_SLOT - 1] == 50
    assert seq.slots[0] == 40
    assert seq.slots[-1] == 60
    assert all(n is not None for n in seq.slots)
    assert seq.sigh_slot_positions == ()
    assert not seq.excluded


def test_build_sequences_pads_edges_with_absent_slots():
    (seq,) = build_sequences([3], breath_count=8, subject_id="r1")
    # breaths -7..-1 do not exist, nor do 8..13
    assert seq.slots[:7] == (None,) * 7
    assert seq.slots[7:15] == tuple(range(8))
    assert seq.slots[15:] == (None,) * 6


def test_build_sequences_flags_sigh_neighbors():
    seqs = build_sequences([20, 23], breath_count=100, subject_id="r1")
    by_anchor = {s.sigh_breath_number: s for s in seqs}
    assert by_anchor[20].sigh_slot_positions == (SIGH_SLOT + 3,)
    assert by_anchor[23].sigh_slot_positions == (SIGH_SLOT - 3,)


def test_load_exclusions(tmp_path):
    path = tmp_path / "excl.csv"
    path.write_text(
        "subject_id,sigh_breath_number,reason\n"
        "r1,42,double sigh\n"
        "r2,7,\n"
        "\n"
        "r2,9,movement artifact\n"
    )
    got = load_exclusions(path)
    assert got == [("r1", 42, "double sigh"), ("r2", 7, ""),
                   ("r2", 9, "movement artifact")]


def test_load_exclusions_reports_line_numbers(tmp_path):
    path = tmp_path / "excl.csv"
    path.write_text("subject_id,sigh_breath_number,reason\nr1,notanint,x\n")
    with pytest.raises(DataFormatError, match="line 2"):
        load_exclusions(path)
    path.write_text("who,what\nr1,3\n")
    with pytest.raises(DataFormatError, match="line 1"):
        load_exclusions(path)


def test_apply_exclusions_marks_and_warns():
    seqs = build_sequences([30, 60], breath_count=100, subject_id="r1")
    with pytest.warns(UserWarning, match="r9"):
        out, unmatched = apply_exclusions(
            seqs, [("r1", 30, "bad"), ("r9", 5, "ghost")]
        )
    assert [s.excluded for s in out] == [True, False]
    assert unmatched == [("r9", 5)]
    # untouched run stays warning-free
    out2, unmatched2 = apply_exclusions(seqs, [])
    assert unmatched2 == []
    assert all(not s.excluded for s in out2)


def fixture_pools(metric="Penh"):
    # one subject, one mid-record sigh, metric equals the breath number
    rows = mk_rows([1.0] * 40, **{metric: list(range(40))})
    seqs = build_sequences([20], breath_count=40, subject_id="r1")
    return seqs, {"r1": rows}


def test_position_aggregates_single_sequence_collapses():
    seqs, by_subject = fixture_pools()
    aggs = position_aggregates(seqs, "Penh", by_subject)
    assert len(aggs) == SLOT_COUNT
    for pos, agg in enumerate(aggs, start=1):
        want = 20 + (pos - SIGH_SLOT)
        assert agg.median == want
        assert agg.q1 == agg.q3 == want
        assert agg.outliers == ()


def test_position_aggregates_skips_absent_and_nan():
    rows = mk_rows([1.0] * 8, Penh=[0, 1, 2, 3, math.nan, 5, 6, 7])
    seqs = build_sequences([3], breath_count=8, subject_id="r1")
    aggs = position_aggregates(seqs, "Penh", {"r1": rows})
    assert aggs[0] is None                       # slot off the record edge
    assert aggs[SIGH_SLOT - 1].median == 3       # the sigh itself
    assert aggs[SIGH_SLOT] is None               # breath 4 is nan
    assert aggs[SIGH_SLOT + 1].median == 5


def test_position_aggregates_needs_surviving_sequences():
    seqs, by_subject = fixture_pools()
    excluded, _ = apply_exclusions(seqs, [("r1", 20, "why not")])
    with pytest.raises(InsufficientDataError):
        position_aggregates(excluded, "Penh", by_subject)


def two_category_fixture(shift_post=0.0, seed=0, n_breaths=60,
                         subject_sd=0.0, noise_sd=0.05):
    """Four subjects, two per activity category, one mid-record sigh each.

    shift_post adds a constant to the post-sigh breaths of the second
    category only.
    """
    rng = np.random.default_rng(seed)
    breaths_by_subject = {}
    labels = {}
    sequences = []
    for subj, label in [("a1", "midactive"), ("a2", "midactive"),
                        ("r1", "midrest"), ("r2", "midrest")]:
        offset = float(rng.normal(0.0, subject_sd))
        vals = offset + rng.normal(0.0, noise_sd, n_breaths)
        if shift_post and label == "midrest":
            vals[31:] += shift_post
        rows = mk_rows([1.0] * n_breaths, Penh=list(vals))
        breaths_by_subject[subj] = rows
        labels[subj] = label
        sequences.extend(build_sequences([30], n_breaths, subj))
    return sequences, breaths_by_subject, labels


def test_pre_post_compare_row_shape():
    seqs, rows, labels = two_category_fixture(seed=3)
    pre, post, signed = pre_post_compare(seqs, "Penh", "activity", rows,
                                         labels)
    assert pre.phase == "pre_sigh" and post.phase == "post_sigh"
    assert pre.cat1_label == "midactive" and pre.cat2_label == "midrest"
    assert pre.sigh_impact is None
    assert post.sigh_impact == pytest.approx(abs(signed))
    assert pre.means_difference == pytest.approx(pre.cat1_mean - pre.cat2_mean,
                                                 abs=1e-12)
    assert 0.0 <= pre.p_value <= 1.0


def test_pre_post_pools_disjoint_and_exclude_the_sigh():
    # metric value encodes breath number; the sigh value 30 must appear in
    # neither phase mean under depth 1 (only breaths 29 and 31 contribute)
    rows = mk_rows([1.0] * 60, Penh=[float(i) for i in range(60)])
    rows2 = mk_rows([1.0] * 60, Penh=[float(i) + 0.5 for i in range(60)])
    seqs = build_sequences([30], 60, "s1") + build_sequences([30], 60, "s2")
    by_subject = {"s1": rows, "s2": rows2}
    labels = {"s1": "midactive", "s2": "midrest"}
    with pytest.raises(InsufficientDataError):
        # depth 1 gives one breath per category per phase: too few
        pre_post_compare(seqs, "Penh", "activity", by_subject, labels,
                         context_depth=1)
    pre, post, _ = pre_post_compare(seqs, "Penh", "activity", by_subject,
                                    labels, context_depth=2)
    assert pre.cat1_mean == pytest.approx((28 + 29) / 2)
    assert post.cat1_mean == pytest.approx((31 + 32) / 2)


def test_context_depth_validation():
    seqs, rows, labels = two_category_fixture()
    with pytest.raises(ConfigError):
        pre_post_compare(seqs, "Penh", "activity", rows, labels,
                         context_depth=0)
    with pytest.raises(ConfigError):
        pre_post_compare(seqs, "Penh", "activity", rows, labels,
                         context_depth=11)


def test_excluding_a_whole_category_is_insufficient():
    seqs, rows, labels = two_category_fixture()
    marked, _ = apply_exclusions(
        seqs, [("r1", 30, "x"), ("r2", 30, "x")]
    )
    with pytest.raises(InsufficientDataError, match="midrest"):
        pre_post_compare(marked, "Penh", "activity", rows, labels)


def test_aa_categories_give_small_impact():
    hits = 0
    trials = 50
    for seed in range(trials):
        seqs, rows, labels = two_category_fixture(seed=seed, subject_sd=0.3,
                                                  noise_sd=0.05)
        _, _, signed = pre_post_compare(seqs, "Penh", "activity", rows,
                                        labels)
        if abs(signed) < 0.5:
            hits += 1
    assert hits >= 0.9 * trials


def test_post_only_shift_produces_large_impact():
    seqs, rows, labels = two_category_fixture(shift_post=1.0, seed=5)
    pre, post, _ = pre_post_compare(seqs, "Penh", "activity", rows, labels)
    assert post.p_value < 1e-3
    assert post.sigh_impact == pytest.approx(abs(pre.p_value - post.p_value))
    assert post.sigh_impact > 0.0
