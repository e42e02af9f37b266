"""Generator determinism, ground-truth soundness, event rendering."""

import json

import numpy as np
import pytest

from plethpipe.breath_metrics import compute_stats
from plethpipe.errors import UsageError
from plethpipe.preprocess import sap_filter
from plethpipe.segmentation import (
    assemble_candidates,
    find_crossings,
    reject_anomalies,
)
from plethpipe.signal_io import Activity, Gene
from plethpipe.synth import (
    GROUND_TRUTH_COLUMNS,
    RestWindow,
    SniffBurst,
    SynthProfile,
    generate,
    load_profile,
    write_ground_truth_csv,
)


def clean_profile(**over):
    base = dict(seed=42, duration_s=5.2, base_rate_hz=2.0, amplitude=1.0)
    base.update(over)
    return SynthProfile(**base)


def test_same_seed_is_byte_identical():
    rec1, gt1 = generate(clean_profile(rate_jitter=0.1, amplitude_jitter=0.1,
                                       noise_std=0.02, impulse_count=5,
                                       impulse_magnitude=10.0))
    rec2, gt2 = generate(clean_profile(rate_jitter=0.1, amplitude_jitter=0.1,
                                       noise_std=0.02, impulse_count=5,
                                       impulse_magnitude=10.0))
    assert rec1.samples.tobytes() == rec2.samples.tobytes()
    assert gt1 == gt2


def test_uniform_breaths_land_on_exact_multiples():
    rec, gt = generate(clean_profile())
    assert len(gt.breaths) == 10
    for i, b in enumerate(gt.breaths):
        assert b.start == 500 * i
        assert b.insp_end == 500 * i + 200
        assert b.end == 500 * (i + 1)
        assert b.duration_s == pytest.approx(0.5)
        assert not b.is_sigh
    assert rec.samples.shape == (5200,)


def test_boundaries_are_strictly_increasing_and_contiguous():
    _, gt = generate(clean_profile(rate_jitter=0.3, amplitude_jitter=0.2,
                                   seed=9))
    for b in gt.breaths:
        assert b.start < b.insp_end < b.end
    for a, b in zip(gt.breaths[:-1], gt.breaths[1:]):
        assert a.end == b.start


def test_segmentation_recovers_clean_boundaries_exactly():
    rec, gt = generate(clean_profile(rate_jitter=0.15, seed=3))
    neg, pos = find_crossings(rec.samples)
    cands, _ = assemble_candidates(neg, pos)
    kept, removed = reject_anomalies(cands, rec.samples, rec.sample_rate_hz)
    assert removed == []
    # the opening boundary at sample 0 has no preceding sample, so the
    # first true breath is invisible to crossing detection
    truth = gt.breaths[1:]
    assert len(kept) == len(truth)
    for c, b in zip(kept, truth):
        assert c.start == b.start
        assert c.insp_end == b.insp_end
        assert c.end == b.end


def test_measured_metrics_match_closed_forms_on_clean_render():
    rec, gt = generate(clean_profile(rate_jitter=0.1, amplitude_jitter=0.1,
                                     seed=17))
    dt = 1.0 / rec.sample_rate_hz
    for b in gt.breaths:
        st = compute_stats(b, rec.samples, rec.sample_rate_hz)
        assert st.ti_s == pytest.approx(b.ti_s)
        assert st.te_s == pytest.approx(b.te_s)
        assert st.pip == pytest.approx(b.pip, abs=5e-4 * abs(b.pip))
        # the rise peak can fall a full sample off the grid; deficit is
        # about (pi / (2 * ur_samples))^2 / 2, under 1e-3 at these rates
        assert st.pep == pytest.approx(b.pep, abs=1.5e-3 * b.pep)
        assert st.tr_s == pytest.approx(b.tr_s, abs=2 * dt)
        assert st.pause == pytest.approx(b.pause, rel=0.02)
        assert st.penh == pytest.approx(b.penh, rel=0.02)


def test_sigh_flags_align_and_stand_out():
    prof = clean_profile(duration_s=30.0, sigh_times=(7.3, 19.0),
                         amplitude_jitter=0.2, seed=11)
    _, gt = generate(prof)
    sighs = [b for b in gt.breaths if b.is_sigh]
    assert len(sighs) == 2
    assert gt.sigh_numbers() == tuple(
        i for i, b in enumerate(gt.breaths) if b.is_sigh
    )
    base = np.median([b.pep for b in gt.breaths if not b.is_sigh])
    for b in sighs:
        assert b.pep >= prof.sigh_amplitude_factor * base * 0.9
        assert b.duration_s >= 1.4 * (1.0 / prof.base_rate_hz)
    # each requested time falls inside its flagged breath
    for want, b in zip(sorted(prof.sigh_times), sighs):
        assert b.start / 1000.0 <= want < b.start / 1000.0 + b.duration_s


def test_sigh_time_past_the_end_is_rejected():
    with pytest.raises(UsageError, match="sigh_times"):
        generate(clean_profile(sigh_times=(99.0,)))


def test_impulses_are_isolated_and_clear_of_boundaries():
    prof = clean_profile(duration_s=20.0, impulse_count=20,
                         impulse_magnitude=50.0,
                         impulse_polarity="negative", seed=5)
    rec, gt = generate(prof)
    idx = np.array(gt.impulse_indices)
    assert idx.size == 20
    assert np.all(np.diff(idx) >= 5)
    starts = np.array([b.start for b in gt.breaths])
    for p in idx:
        assert np.min(np.abs(starts - p)) >= 3
    # paired run shows the exact injection sites and the negative polarity
    clean, _ = generate(prof.__class__(**{**prof.__dict__,
                                          "impulse_count": 0}))
    delta = rec.samples - clean.samples
    assert set(np.nonzero(delta)[0]) == set(gt.impulse_indices)
    assert np.all(delta[idx] == -50.0)


def test_impulse_filter_paired_run_touches_only_impulse_sites():
    prof = clean_profile(duration_s=20.0, impulse_count=20,
                         impulse_magnitude=100.0,
                         impulse_polarity="negative", seed=8)
    rec, gt = generate(prof)
    clean, _ = generate(prof.__class__(**{**prof.__dict__,
                                          "impulse_count": 0}))
    filtered = sap_filter(rec.samples, threshold=9.0)
    diff = np.abs(filtered - clean.samples)
    idx = np.array(gt.impulse_indices)
    mask = np.zeros(diff.size, dtype=bool)
    mask[idx] = True
    assert np.all(diff[~mask] == 0.0)
    assert np.max(diff[mask]) <= 0.05


def test_sniff_bursts_do_not_shift_timing():
    base = clean_profile(duration_s=20.0, rate_jitter=0.2, seed=13)
    withs = base.__class__(**{**base.__dict__,
                              "sniff_bursts": (SniffBurst(6.0, 2.0, 40.0),)})
    rec0, gt0 = generate(base)
    rec1, gt1 = generate(withs)
    assert gt0.breaths == gt1.breaths
    delta = np.nonzero(rec0.samples != rec1.samples)[0]
    assert delta.size > 0
    assert delta.min() >= 6.0 * 1000 - 1
    assert delta.max() <= 8.0 * 1000 + 1


def test_noise_leaves_ground_truth_unchanged():
    quiet = clean_profile(seed=21)
    noisy = clean_profile(seed=21, noise_std=0.05)
    _, gt0 = generate(quiet)
    _, gt1 = generate(noisy)
    assert gt0 == gt1


def test_rest_window_scales_rate_and_amplitude():
    prof = clean_profile(
        duration_s=30.0,
        rest_windows=(RestWindow(10.0, 20.0, rate_scale=0.5,
                                 amplitude_scale=0.7),),
    )
    _, gt = generate(prof)
    inside = [b for b in gt.breaths if 10.0 <= b.start / 1000.0 < 20.0]
    outside = [b for b in gt.breaths if b.start / 1000.0 < 10.0]
    assert inside and outside
    for b in inside:
        assert b.duration_s == pytest.approx(1.0)
        assert b.pip == pytest.approx(-0.7)
    for b in outside:
        assert b.duration_s == pytest.approx(0.5)
        assert b.pip == pytest.approx(-1.0)


@pytest.mark.parametrize("field,value", [
    ("duration_s", -1.0),
    ("base_rate_hz", 0.0),
    ("rate_jitter", 0.9),
    ("insp_fraction", 0.99),
    ("exp_rise_fraction", 1.5),
    ("impulse_polarity", "sideways"),
    ("noise_std", -0.1),
    ("subject_id", " padded "),
])
def test_invalid_fields_are_named(field, value):
    prof = clean_profile(**{field: value})
    with pytest.raises(UsageError, match=field):
        generate(prof)


def test_rest_window_validation():
    with pytest.raises(UsageError, match="rest_windows"):
        generate(clean_profile(rest_windows=(RestWindow(5.0, 2.0),)))


def test_ground_truth_csv_round_trip(tmp_path):
    _, gt = generate(clean_profile())
    out = tmp_path / "truth.csv"
    write_ground_truth_csv(gt, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == ",".join(GROUND_TRUTH_COLUMNS)
    assert len(lines) == 1 + len(gt.breaths)
    first = lines[1].split(",")
    assert first[0] == "0"
    assert int(first[1]) == gt.breaths[0].start
    assert float(first[5]) == pytest.approx(gt.breaths[0].duration_s)


def test_load_profile_from_json(tmp_path):
    path = tmp_path / "prof.json"
    path.write_text(json.dumps({
        "seed": 4, "duration_s": 6.0, "base_rate_hz": 2.0,
        "sigh_times": [2.0],
        "rest_windows": [[1.0, 3.0, 0.8, 0.9]],
        "sniff_bursts": [[4.0, 1.0, 35.0]],
        "activity": "midactive", "gene": "gene95",
        "subject_id": "r7",
    }))
    prof = load_profile(path)
    assert prof.activity is Activity.MIDACTIVE
    assert prof.gene is Gene.GENE95
    assert prof.rest_windows == (RestWindow(1.0, 3.0, 0.8, 0.9),)
    assert prof.sniff_bursts == (SniffBurst(4.0, 1.0, 35.0),)
    rec, gt = generate(prof)
    assert rec.subject_id == "r7"
    assert len(gt.sigh_numbers()) == 1


def test_load_profile_rejects_unknown_field(tmp_path):
    path = tmp_path / "prof.json"
    path.write_text(json.dumps({"seed": 1, "duration_s": 5.0,
                                "base_rate_hz": 2.0, "wavelength": 3}))
    with pytest.raises(UsageError, match="wavelength"):
        load_profile(path)
