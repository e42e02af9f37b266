"""Synthetic plethysmography recordings with exact ground truth.

Waveform model, per breath of period T = Ti + Te seconds:

    inspiration, 0 <= t < Ti:   -A * (1 - cos(2*pi*t / Ti)) / 2
    expiration rise, 0 <= u < Ur:   B * sin(pi*u / (2*Ur)),  Ur = rise * Te
    expiration decay, u >= Ur:      B * exp(-(u - Ur) / tau), tau = decay * Te

with B = exp_amplitude_ratio * A. On the continuous model this gives exact
per-breath values

    PIP = -A, PEP = B,
    Tr = Ur + tau * ln(1 / 0.36)   capped at Te,
    Pause = (Te - Tr) / Tr,  Penh = (B / A) * Pause.

Samples take the continuous value at (k + 1/2) / rate, so the first sample
of every phase already sits on that phase's side of zero and segmentation
sees the true boundary index. Sighs scale one breath's amplitude and
period. Sniff bursts ride on top as a fixed-fraction oscillation and draw
no randomness, so toggling them never shifts breath timing. Impulses add
+/- impulse_magnitude at isolated samples away from breath boundaries.
"""

import csv
import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import DataFormatError, UsageError
from .signal_io import Activity, Gene, Recording

# additive sniff oscillation amplitude as a fraction of profile amplitude
SNIFF_AMPLITUDE_FRACTION = 0.25
# decay level whose crossing defines the true relaxation time
_DECAY_LOG = math.log(1.0 / 0.36)

# impulses keep this many samples clear of breath starts and of each other
_IMPULSE_BOUNDARY_GAP = 3
_IMPULSE_SEPARATION = 5


@dataclass(frozen=True)
class RestWindow:
    start_s: float
    end_s: float
    rate_scale: float = 1.0
    amplitude_scale: float = 1.0


@dataclass(frozen=True)
class SniffBurst:
    start_s: float
    len_s: float
    freq_hz: float


@dataclass(frozen=True)
class SynthProfile:
    seed: int
    duration_s: float
    base_rate_hz: float
    amplitude: float = 1.0
    rate_jitter: float = 0.0
    amplitude_jitter: float = 0.0
    sample_rate_hz: float = 1000.0
    insp_fraction: float = 0.4
    exp_rise_fraction: float = 0.15
    exp_decay_fraction: float = 0.22
    exp_amplitude_ratio: float = 0.85
    sigh_times: tuple = ()
    sigh_amplitude_factor: float = 2.5
    sigh_duration_factor: float = 1.6
    sniff_bursts: tuple = ()
    impulse_count: int = 0
    impulse_magnitude: float = 0.0
    impulse_polarity: str = "both"
    noise_std: float = 0.0
    rest_windows: tuple = ()
    subject_id: str = "synth"
    activity: Activity = Activity.MIDREST
    gene: Gene = Gene.GENE59


@dataclass(frozen=True)
class TrueBreath:
    start: int
    insp_end: int
    end: int
    is_sigh: bool
    duration_s: float
    ti_s: float
    te_s: float
    pip: float
    pep: float
    tr_s: float
    pause: float
    penh: float


@dataclass(frozen=True)
class GroundTruth:
    breaths: tuple
    impulse_indices: tuple
    sample_rate_hz: float

    def sigh_numbers(self):
        """0-based breath numbers of the sigh breaths."""
        return tuple(i for i, b in enumerate(self.breaths) if b.is_sigh)


def validate_profile(profile: SynthProfile) -> None:
    """Raise a usage error naming the first offending field."""
    p = profile

    def bad(name, why):
        raise UsageError(f"invalid profile field {name}: {why}")

    if p.duration_s <= 0:
        bad("duration_s", "must be positive")
    if p.base_rate_hz <= 0:
        bad("base_rate_hz", "must be positive")
    if p.sample_rate_hz <= 0:
        bad("sample_rate_hz", "must be positive")
    if p.amplitude <= 0:
        bad("amplitude", "must be positive")
    if not 0 <= p.rate_jitter <= 0.5:
        bad("rate_jitter", "must lie in [0, 0.5]")
    if not 0 <= p.amplitude_jitter <= 0.5:
        bad("amplitude_jitter", "must lie in [0, 0.5]")
    if not 0.05 <= p.insp_fraction <= 0.95:
        bad("insp_fraction", "must lie in [0.05, 0.95]")
    if not 0 < p.exp_rise_fraction < 0.9:
        bad("exp_rise_fraction", "must lie in (0, 0.9)")
    if p.exp_decay_fraction <= 0:
        bad("exp_decay_fraction", "must be positive")
    if p.exp_amplitude_ratio <= 0:
        bad("exp_amplitude_ratio", "must be positive")
    if p.sigh_amplitude_factor < 1:
        bad("sigh_amplitude_factor", "must be >= 1")
    if p.sigh_duration_factor < 1:
        bad("sigh_duration_factor", "must be >= 1")
    for t in p.sigh_times:
        if not 0 <= t < p.duration_s:
            bad("sigh_times", f"time {t} outside the recording")
    for b in p.sniff_bursts:
        if b.len_s <= 0 or b.freq_hz <= 0 or b.start_s < 0:
            bad("sniff_bursts", "start/len/freq must be positive")
    if p.impulse_count < 0:
        bad("impulse_count", "must be >= 0")
    if p.impulse_count and p.impulse_magnitude <= 0:
        bad("impulse_magnitude", "must be positive when impulses requested")
    if p.impulse_polarity not in ("negative", "positive", "both"):
        bad("impulse_polarity", "must be negative, positive or both")
    if p.noise_std < 0:
        bad("noise_std", "must be >= 0")
    for w in p.rest_windows:
        if not (0 <= w.start_s < w.end_s):
            bad("rest_windows", f"window ({w.start_s}, {w.end_s}) not ordered")
        if w.rate_scale <= 0 or w.amplitude_scale <= 0:
            bad("rest_windows", "scales must be positive")
    if not p.subject_id or p.subject_id != p.subject_id.strip():
        bad("subject_id", "must be non-empty without surrounding whitespace")


@dataclass
class _Planned:
    start: int
    n_total: int
    n_insp: int
    amp: float
    is_sigh: bool


def _window_scales(t_s, windows):
    for w in windows:
        if w.start_s <= t_s < w.end_s:
            return w.rate_scale, w.amplitude_scale
    return 1.0, 1.0


def _schedule(profile, fs, n_samples, timing_rng, amp_rng):
    """Lay out breath spans and amplitudes; rendering comes after."""
    p = profile
    pending = sorted(p.sigh_times)
    planned = []
    cursor = 0
    while True:
        t_start = cursor / fs
        rate_scale, amp_scale = _window_scales(t_start, p.rest_windows)
        # both draws happen every breath so event toggles cannot shift
        # the stream for later breaths
        r_jit = 1.0 + p.rate_jitter * float(timing_rng.uniform(-1.0, 1.0))
        a_jit = 1.0 + p.amplitude_jitter * float(amp_rng.uniform(-1.0, 1.0))
        period_s = 1.0 / (p.base_rate_hz * rate_scale * r_jit)
        amp = p.amplitude * amp_scale * a_jit

        is_sigh = bool(pending) and t_start <= pending[0] < t_start + period_s
        if is_sigh:
            pending.pop(0)
            period_s *= p.sigh_duration_factor
            # the sigh floor is applied after scheduling, against the
            # median planned amplitude
            amp = p.amplitude * amp_scale * p.sigh_amplitude_factor

        n_total = int(round(period_s * fs))
        n_insp = int(round(p.insp_fraction * n_total))
        n_insp = min(max(n_insp, 2), n_total - 2)
        if n_total < 4:
            raise UsageError(
                "invalid profile field base_rate_hz: breaths shorter than "
                "4 samples at this sample rate"
            )
        if cursor + n_total > n_samples:
            break
        planned.append(_Planned(cursor, n_total, n_insp, amp, is_sigh))
        cursor = cursor + n_total
    if pending:
        raise UsageError(
            f"invalid profile field sigh_times: no full breath covers "
            f"time {pending[0]}"
        )

    # guarantee sigh prominence against whatever amplitudes were drawn
    base_amps = [b.amp for b in planned if not b.is_sigh]
    if base_amps:
        floor = float(np.median(base_amps)) * profile.sigh_amplitude_factor
        for b in planned:
            if b.is_sigh and b.amp < floor:
                b.amp = floor
    return planned, cursor


def _render_breath(out, b, profile, fs):
    """Fill out[b.start : b.start + b.n_total] with one breath."""
    p = profile
    n_exp = b.n_total - b.n_insp
    ti_s = b.n_insp / fs
    te_s = n_exp / fs
    amp_b = p.exp_amplitude_ratio * b.amp

    t = (np.arange(b.n_insp) + 0.5) / fs
    insp = -0.5 * b.amp * (1.0 - np.cos(2.0 * np.pi * t / ti_s))
    u = (np.arange(n_exp) + 0.5) / fs
    ur = p.exp_rise_fraction * te_s
    tau = p.exp_decay_fraction * te_s
    exp = np.where(
        u < ur,
        amp_b * np.sin(0.5 * np.pi * np.minimum(u, ur) / ur),
        amp_b * np.exp(-np.maximum(u - ur, 0.0) / tau),
    )
    out[b.start:b.start + b.n_insp] = insp
    out[b.start + b.n_insp:b.start + b.n_total] = exp

    tr_s = min(ur + tau * _DECAY_LOG, te_s)
    pause = (te_s - tr_s) / tr_s if tr_s > 0 else math.nan
    penh = (amp_b / b.amp) * pause
    return TrueBreath(
        start=b.start,
        insp_end=b.start + b.n_insp,
        end=b.start + b.n_total,
        is_sigh=b.is_sigh,
        duration_s=b.n_total / fs,
        ti_s=ti_s,
        te_s=te_s,
        pip=-b.amp,
        pep=amp_b,
        tr_s=tr_s,
        pause=pause,
        penh=penh,
    )


def _place_impulses(profile, n_samples, starts, rng):
    """Isolated sample positions clear of breath starts and each other."""
    count = profile.impulse_count
    if count == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    lo, hi = _IMPULSE_BOUNDARY_GAP, n_samples - _IMPULSE_BOUNDARY_GAP
    if hi - lo < count * _IMPULSE_SEPARATION:
        raise UsageError(
            "invalid profile field impulse_count: recording too short to "
            "separate that many impulses"
        )
    starts = np.asarray(starts, dtype=np.int64)
    chosen = []
    attempts = 0
    while len(chosen) < count:
        attempts += 1
        if attempts > 200 * count + 1000:
            raise UsageError(
                "invalid profile field impulse_count: could not place "
                "impulses with the required separation"
            )
        pos = int(rng.integers(lo, hi))
        j = int(np.searchsorted(starts, pos))
        near_start = any(
            0 <= j + d < len(starts)
            and abs(int(starts[j + d]) - pos) < _IMPULSE_BOUNDARY_GAP
            for d in (-1, 0)
        )
        if near_start:
            continue
        if any(abs(pos - q) < _IMPULSE_SEPARATION for q in chosen):
            continue
        chosen.append(pos)
    chosen.sort()

    if profile.impulse_polarity == "negative":
        signs = -np.ones(count)
    elif profile.impulse_polarity == "positive":
        signs = np.ones(count)
    else:
        signs = np.where(rng.integers(0, 2, size=count) == 0, -1.0, 1.0)
    return np.array(chosen, dtype=np.int64), signs


def generate(profile: SynthProfile):
    """Render a profile into (Recording, GroundTruth)."""
    validate_profile(profile)
    p = profile
    fs = float(p.sample_rate_hz)
    n_samples = int(round(p.duration_s * fs))

    streams = np.random.SeedSequence(p.seed).spawn(4)
    timing_rng = np.random.default_rng(streams[0])
    amp_rng = np.random.default_rng(streams[1])
    impulse_rng = np.random.default_rng(streams[2])
    noise_rng = np.random.default_rng(streams[3])

    planned, cursor = _schedule(p, fs, n_samples, timing_rng, amp_rng)
    if not planned:
        raise UsageError(
            "invalid profile field duration_s: too short for a single breath"
        )

    samples = np.empty(n_samples, dtype=np.float64)
    breaths = []
    for b in planned:
        breaths.append(_render_breath(samples, b, p, fs))
    if cursor < n_samples:
        # pad the tail with the start of one more breath so the last full
        # breath keeps its closing boundary; the partial is not in the truth
        n_pad = n_samples - cursor + 4
        pad = np.empty(n_pad)
        _render_breath(pad, _Planned(0, n_pad, max(n_pad // 2, 2),
                                     p.amplitude, False), p, fs)
        samples[cursor:] = pad[:n_samples - cursor]
    # a breath ending exactly at the buffer edge has no closing crossing
    breaths = [b for b in breaths if b.end < n_samples]

    for burst in p.sniff_bursts:
        i0 = int(round(burst.start_s * fs))
        i1 = min(int(round((burst.start_s + burst.len_s) * fs)), n_samples)
        if i0 >= i1:
            continue
        t = (np.arange(i1 - i0) + 0.5) / fs
        samples[i0:i1] += (SNIFF_AMPLITUDE_FRACTION * p.amplitude
                           * np.sin(2.0 * np.pi * burst.freq_hz * t))

    starts = [b.start for b in breaths]
    impulse_idx, signs = _place_impulses(p, n_samples, starts, impulse_rng)
    if impulse_idx.size:
        samples[impulse_idx] += signs * p.impulse_magnitude

    if p.noise_std > 0:
        samples += noise_rng.normal(0.0, p.noise_std, n_samples)

    rec = Recording(
        subject_id=p.subject_id,
        activity=p.activity,
        gene=p.gene,
        sample_rate_hz=fs,
        samples=samples,
    )
    truth = GroundTruth(
        breaths=tuple(breaths),
        impulse_indices=tuple(int(i) for i in impulse_idx),
        sample_rate_hz=fs,
    )
    return rec, truth


GROUND_TRUTH_COLUMNS = [
    "breath_number", "start_index", "insp_end_index", "end_index",
    "is_sigh", "duration_s", "ti_s", "te_s", "pip", "pep", "tr_s",
    "pause", "penh",
]


def write_ground_truth_csv(truth: GroundTruth, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GROUND_TRUTH_COLUMNS)
        for i, b in enumerate(truth.breaths):
            w.writerow([
                i, b.start, b.insp_end, b.end, int(b.is_sigh),
                *(format(v, ".9g") for v in (
                    b.duration_s, b.ti_s, b.te_s, b.pip, b.pep,
                    b.tr_s, b.pause, b.penh,
                )),
            ])


def load_profile(path) -> SynthProfile:
    """Read a profile from JSON, rejecting unknown fields by name."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise DataFormatError(f"cannot read profile {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"profile {path} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise UsageError(f"profile {path} must be a JSON object")
    known = {f.name for f in fields(SynthProfile)}
    for key in raw:
        if key not in known:
            raise UsageError(f"invalid profile field {key}: unknown field")
    if "activity" in raw:
        raw["activity"] = Activity(raw["activity"])
    if "gene" in raw:
        raw["gene"] = Gene(raw["gene"])
    if "rest_windows" in raw:
        raw["rest_windows"] = tuple(
            RestWindow(*w) if isinstance(w, (list, tuple)) else RestWindow(**w)
            for w in raw["rest_windows"]
        )
    if "sniff_bursts" in raw:
        raw["sniff_bursts"] = tuple(
            SniffBurst(*b) if isinstance(b, (list, tuple)) else SniffBurst(**b)
            for b in raw["sniff_bursts"]
        )
    if "sigh_times" in raw:
        raw["sigh_times"] = tuple(raw["sigh_times"])
    try:
        return SynthProfile(**raw)
    except TypeError as e:
        raise UsageError(f"profile {path}: {e}") from e
