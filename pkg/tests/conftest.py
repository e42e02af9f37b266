"""Shared helpers for building small synthetic EDF corpora."""

from plethpipe.signal_io import serialize_edf
from plethpipe.synth import SynthProfile, generate

# expiratory area matching inspiratory area keeps the record mean near zero,
# so centering barely moves the zero crossings and breath counts are stable
BALANCED_RATIO = 1.0722371


def make_edf(path, subject, activity, gene, *, seed, base_rate,
             duration=25.0, sighs=()):
    profile = SynthProfile(
        seed=seed, duration_s=duration, base_rate_hz=base_rate,
        rate_jitter=0.03, amplitude_jitter=0.05, sample_rate_hz=200.0,
        exp_amplitude_ratio=BALANCED_RATIO, sigh_times=sighs,
        subject_id=subject, activity=activity, gene=gene,
    )
    rec, truth = generate(profile)
    path.write_bytes(serialize_edf(rec))
    return truth
