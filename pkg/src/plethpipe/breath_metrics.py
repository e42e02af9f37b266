"""Per-breath timing and amplitude metrics.

Sign convention: inspiration is the negative excursion of the centered flow
signal, expiration the positive one. PIP is the deepest inspiratory value
(a minimum, <= 0 on real breaths), PEP the highest expiratory value. The
relaxation time Tr runs from the start of expiration until the signal first
decays to 36% of PEP at or after the PEP sample, with linear interpolation
between the bracketing samples; an expiration that never decays that far
gets Tr = Te. Pause = (Te - Tr) / Tr and Penh = (|PEP| / |PIP|) * Pause,
with the raw signed ratio kept alongside for auditing.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

# fraction of peak expiratory flow whose crossing time defines relaxation
TR_DECAY_FRACTION = 0.36


@dataclass(frozen=True)
class BreathStats:
    duration_s: float
    ti_s: float
    te_s: float
    tr_s: float
    pip: float
    pep: float
    pause: float
    penh: float
    # (PEP / PIP) * Pause without the magnitude convention, for auditing
    penh_signed: float
    tr_capped: bool

    def is_finite(self):
        return all(
            math.isfinite(v)
            for v in (self.duration_s, self.ti_s, self.te_s, self.tr_s,
                      self.pip, self.pep, self.pause, self.penh)
        )


def compute_stats(breath, s, rate_hz) -> BreathStats:
    """Metrics for one breath span on the centered signal.

    Args:
        breath: anything with start/insp_end/end sample indices, either a
            candidate (start, insp_end, end) or a stored record
            (start_index, insp_end_index, end_index).
        s: centered native-rate signal.
        rate_hz: native sampling rate.
    """
    start, insp_end, end = _span(breath)
    if not (0 <= start < insp_end < end <= len(s)):
        raise UsageError(
            f"breath span [{start}, {insp_end}, {end}) is not ordered inside "
            f"a signal of {len(s)} samples"
        )
    if rate_hz <= 0:
        raise UsageError("rate must be positive")
    s = np.asarray(s, dtype=np.float64)

    ti = (insp_end - start) / rate_hz
    te = (end - insp_end) / rate_hz
    duration = (end - start) / rate_hz

    pip = float(s[start:insp_end].min())
    exp_phase = s[insp_end:end]
    pep = float(exp_phase.max())

    tr, capped = _relaxation_time(exp_phase, pep, te, rate_hz)

    if tr > 0:
        pause = (te - tr) / tr
    else:
        pause = math.nan
    if pip != 0 and math.isfinite(pause):
        penh = (abs(pep) / abs(pip)) * pause
        penh_signed = (pep / pip) * pause
    else:
        penh = math.nan
        penh_signed = math.nan

    return BreathStats(
        duration_s=duration,
        ti_s=ti,
        te_s=te,
        tr_s=tr,
        pip=pip,
        pep=pep,
        pause=pause,
        penh=penh,
        penh_signed=penh_signed,
        tr_capped=capped,
    )


def _span(breath):
    if hasattr(breath, "start_index"):
        return breath.start_index, breath.insp_end_index, breath.end_index
    return breath.start, breath.insp_end, breath.end


def _relaxation_time(exp_phase, pep, te, rate_hz):
    """Time from expiration start to the 36%-of-PEP decay crossing.

    The search begins at the first sample achieving PEP; the crossing is
    linearly interpolated between the last sample above the level and the
    first at or below it. Returns (tr_seconds, capped_flag); capped means
    the level was never reached and Te was used.
    """
    level = TR_DECAY_FRACTION * pep
    peak_idx = int(np.argmax(exp_phase))
    after = exp_phase[peak_idx:]
    below = np.nonzero(after <= level)[0]
    if below.size == 0:
        return te, True
    k = peak_idx + int(below[0])
    if k == peak_idx:
        # peak itself already at or below the level (non-positive PEP);
        # nothing to interpolate against
        return k / rate_hz, False
    prev_v = exp_phase[k - 1]
    cur_v = exp_phase[k]
    frac = (prev_v - level) / (prev_v - cur_v)
    return (k - 1 + frac) / rate_hz, False
