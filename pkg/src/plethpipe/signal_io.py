"""EDF recording codec and the Recording domain type.

The on-disk layout is the classic European Data Format: a 256-byte fixed
ASCII header, then one 256-byte header block per signal stored field-major
(all labels first, then all transducer fields, and so on), then data records
of little-endian 16-bit integers. Digital values map to physical units by

    physical = phys_min + (digital - dig_min) * (phys_max - phys_min)
                                              / (dig_max - dig_min)

Parsing is strict: every malformed header field raises with the byte offset
of the field, truncated payloads report expected versus actual byte counts,
and a missing channel lists what the file does contain. Serialization
quantizes with round-half-away-from-zero so writing is reproducible across
platforms, and embeds the subject labels in the patient-identification field
so a round trip recovers them.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ChannelNotFoundError,
    DataFormatError,
    HeaderFormatError,
    RangeError,
    TruncatedDataError,
    UsageError,
)


class Activity(str, enum.Enum):
    MIDACTIVE = "midactive"
    MIDREST = "midrest"


class Gene(str, enum.Enum):
    GENE59 = "gene59"
    GENE95 = "gene95"


@dataclass(frozen=True)
class Recording:
    """One subject's flow signal with its category labels."""

    subject_id: str
    activity: Activity
    gene: Gene
    sample_rate_hz: float
    samples: np.ndarray = field(repr=False)
    physical_unit_label: str = "ml/s"

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise UsageError("sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


# fixed header: (name, offset, length)
_FIXED_FIELDS = (
    ("version", 0, 8),
    ("patient", 8, 80),
    ("recording", 88, 80),
    ("startdate", 168, 8),
    ("starttime", 176, 8),
    ("header_bytes", 184, 8),
    ("reserved", 192, 44),
    ("num_records", 236, 8),
    ("record_duration", 244, 8),
    ("num_signals", 252, 4),
)
_FIXED_OFFSET = {name: off for name, off, _ in _FIXED_FIELDS}

# per-signal fields in storage order: (name, width)
_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("phys_dim", 8),
    ("phys_min", 8),
    ("phys_max", 8),
    ("dig_min", 8),
    ("dig_max", 8),
    ("prefilter", 80),
    ("samples_per_record", 8),
    ("signal_reserved", 32),
)

_HEADER_SIZE = 256
_INT16_MIN, _INT16_MAX = -32768, 32767
_MAX_ASCII_INT = 99_999_999  # widest value an 8-char ASCII field can hold


def _ascii_at(data, offset, length, what):
    raw = data[offset : offset + length]
    try:
        return raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise HeaderFormatError(
            f"{what} is not ASCII", byte_offset=offset
        ) from exc


def _int_at(data, offset, length, what):
    text = _ascii_at(data, offset, length, what).strip()
    try:
        return int(text)
    except ValueError as exc:
        raise HeaderFormatError(
            f"{what} is not an integer: {text!r}", byte_offset=offset
        ) from exc


def _float_at(data, offset, length, what):
    text = _ascii_at(data, offset, length, what).strip()
    try:
        value = float(text)
    except ValueError as exc:
        raise HeaderFormatError(
            f"{what} is not a number: {text!r}", byte_offset=offset
        ) from exc
    if not math.isfinite(value):
        raise HeaderFormatError(f"{what} is not finite", byte_offset=offset)
    return value


def _signal_field_offset(field_name, ns, index):
    base = _HEADER_SIZE
    for name, width in _SIGNAL_FIELDS:
        if name == field_name:
            return base + index * width
        base += ns * width
    raise KeyError(field_name)


def parse_edf(data: bytes, channel_label: str, *, subject_id=None,
              activity=None, gene=None) -> Recording:
    """Decode one channel of an EDF byte string into a Recording.

    The channel is chosen by exact label match after stripping surrounding
    whitespace; the first matching signal wins. Subject labels come from the
    keyword overrides when given, otherwise from the patient-identification
    field written by serialize_edf ("<subject> <activity> <gene>").

    Raises:
        HeaderFormatError: malformed header field (offset included).
        TruncatedDataError: fewer data bytes than the header promises.
        ChannelNotFoundError: no signal carries the requested label.
        DataFormatError: subject labels neither embedded nor supplied.
    """
    if len(data) < _HEADER_SIZE:
        raise TruncatedDataError(
            "fixed header incomplete",
            expected_bytes=_HEADER_SIZE,
            actual_bytes=len(data),
        )
    ns = _int_at(data, _FIXED_OFFSET["num_signals"], 4, "signal count")
    if ns < 1:
        raise HeaderFormatError(
            f"signal count must be >= 1, got {ns}",
            byte_offset=_FIXED_OFFSET["num_signals"],
        )
    header_bytes = _int_at(data, _FIXED_OFFSET["header_bytes"], 8, "header size")
    if header_bytes != _HEADER_SIZE * (ns + 1):
        raise HeaderFormatError(
            f"header size {header_bytes} does not match "
            f"{_HEADER_SIZE * (ns + 1)} for {ns} signals",
            byte_offset=_FIXED_OFFSET["header_bytes"],
        )
    if len(data) < header_bytes:
        raise TruncatedDataError(
            "signal header block incomplete",
            expected_bytes=header_bytes,
            actual_bytes=len(data),
        )
    num_records = _int_at(data, _FIXED_OFFSET["num_records"], 8, "record count")
    record_duration = _float_at(
        data, _FIXED_OFFSET["record_duration"], 8, "record duration"
    )
    if record_duration <= 0:
        raise HeaderFormatError(
            "record duration must be positive",
            byte_offset=_FIXED_OFFSET["record_duration"],
        )

    labels = []
    spr = np.empty(ns, dtype=np.int64)
    for i in range(ns):
        off = _signal_field_offset("label", ns, i)
        labels.append(_ascii_at(data, off, 16, f"signal {i} label").strip())
        off = _signal_field_offset("samples_per_record", ns, i)
        spr[i] = _int_at(data, off, 8, f"signal {i} samples per record")
        if spr[i] < 1:
            raise HeaderFormatError(
                f"signal {i} samples per record must be >= 1",
                byte_offset=off,
            )

    wanted = channel_label.strip()
    try:
        sig = labels.index(wanted)
    except ValueError:
        raise ChannelNotFoundError(wanted, labels) from None

    phys_min = _float_at(
        data, _signal_field_offset("phys_min", ns, sig), 8, "physical minimum"
    )
    phys_max = _float_at(
        data, _signal_field_offset("phys_max", ns, sig), 8, "physical maximum"
    )
    dmin_off = _signal_field_offset("dig_min", ns, sig)
    dig_min = _int_at(data, dmin_off, 8, "digital minimum")
    dmax_off = _signal_field_offset("dig_max", ns, sig)
    dig_max = _int_at(data, dmax_off, 8, "digital maximum")
    if dig_min >= dig_max:
        raise HeaderFormatError(
            f"digital range [{dig_min}, {dig_max}] is empty", byte_offset=dmin_off
        )
    if dig_min < _INT16_MIN or dig_max > _INT16_MAX:
        raise HeaderFormatError(
            f"digital range [{dig_min}, {dig_max}] exceeds 16-bit storage",
            byte_offset=dmin_off,
        )
    unit = _ascii_at(
        data, _signal_field_offset("phys_dim", ns, sig), 8, "physical dimension"
    ).strip()

    record_samples = int(spr.sum())
    record_bytes = record_samples * 2
    payload = len(data) - header_bytes
    if num_records == -1:
        if payload % record_bytes != 0:
            raise TruncatedDataError(
                "payload is not a whole number of data records",
                expected_bytes=header_bytes
                + (payload // record_bytes + 1) * record_bytes,
                actual_bytes=len(data),
            )
        num_records = payload // record_bytes
    elif num_records < 0:
        raise HeaderFormatError(
            f"record count must be >= 0 or -1, got {num_records}",
            byte_offset=_FIXED_OFFSET["num_records"],
        )
    expected = header_bytes + num_records * record_bytes
    if len(data) < expected:
        raise TruncatedDataError(
            "data records incomplete", expected_bytes=expected, actual_bytes=len(data)
        )

    raw = np.frombuffer(
        data, dtype="<i2", count=num_records * record_samples, offset=header_bytes
    ).reshape(num_records, record_samples)
    chan_off = int(spr[:sig].sum())
    digital = raw[:, chan_off : chan_off + int(spr[sig])].reshape(-1)

    gain = (phys_max - phys_min) / (dig_max - dig_min)
    samples = digital.astype(np.float64)
    samples -= dig_min
    samples *= gain
    samples += phys_min

    meta = _labels_from_patient_field(
        _ascii_at(data, _FIXED_OFFSET["patient"], 80, "patient field")
    )
    subject_id = subject_id if subject_id is not None else meta[0]
    activity = activity if activity is not None else meta[1]
    gene = gene if gene is not None else meta[2]
    if subject_id is None or activity is None or gene is None:
        raise DataFormatError(
            "recording carries no subject/activity/gene labels; "
            "supply them explicitly or via a labels file"
        )
    return Recording(
        subject_id=subject_id,
        activity=Activity(activity),
        gene=Gene(gene),
        sample_rate_hz=float(spr[sig]) / record_duration,
        samples=samples,
        physical_unit_label=unit,
    )


def _labels_from_patient_field(text):
    tokens = text.split()
    if len(tokens) >= 3:
        try:
            return tokens[0], Activity(tokens[1]), Gene(tokens[2])
        except ValueError:
            pass
    return None, None, None


def _round_half_away(x):
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _fit_ascii(value, length, what, offset):
    text = str(value)
    if len(text) > length:
        raise HeaderFormatError(
            f"{what} {text!r} does not fit in {length} ASCII bytes",
            byte_offset=offset,
        )
    return text.ljust(length).encode("ascii")


def _pick_record_shape(n, rate):
    """(samples_per_record, duration_string) splitting n samples evenly.

    The duration string must parse back so that spr / duration reproduces
    the rate bit for bit; candidates that cannot are rejected.
    """
    def ok(spr):
        if n % spr or n // spr > _MAX_ASCII_INT:
            return None
        dur = spr / rate
        for fmt in ("%.8g", "%.7g", "%.6g"):
            text = fmt % dur
            if len(text) <= 8:
                parsed = float(text)
                if parsed > 0 and spr / parsed == rate:
                    return text
        return None

    if rate == int(rate) and n % int(rate) == 0:
        return int(rate), "1"
    candidates = sorted(
        {d for d in range(1, int(math.isqrt(n)) + 1) if n % d == 0}
        | {n // d for d in range(1, int(math.isqrt(n)) + 1) if n % d == 0}
    )
    for spr in reversed(candidates):
        if spr > 30720 or spr > _MAX_ASCII_INT:
            continue
        text = ok(spr)
        if text is not None:
            return spr, text
    raise UsageError(
        f"cannot split {n} samples at {rate} Hz into whole data records; "
        "pass samples_per_record explicitly"
    )


def serialize_edf(recording: Recording, *, channel_label: str = "flow",
                  physical_range=None, samples_per_record=None) -> bytes:
    """Encode a Recording as single-channel EDF bytes.

    Args:
        recording: signal and labels to write.
        channel_label: label stored for the one signal.
        physical_range: optional (min, max) scaling span; defaults to the
            sample extremes (constant signals get a unit span around the
            value). A span that fails to cover the samples is an error.
        samples_per_record: optional record size; must divide the sample
            count. Chosen automatically when omitted.
    """
    samples = recording.samples
    n = samples.size
    if n == 0:
        raise UsageError("cannot serialize an empty recording")
    for ch in recording.subject_id:
        if ch.isspace():
            raise UsageError("subject_id must not contain whitespace")
    if physical_range is None:
        lo, hi = float(samples.min()), float(samples.max())
        if lo == hi:
            lo, hi = lo - 1.0, hi + 1.0
    else:
        lo, hi = float(physical_range[0]), float(physical_range[1])
        if lo >= hi:
            raise RangeError("physical range must have min < max")
        if float(samples.min()) < lo or float(samples.max()) > hi:
            raise RangeError(
                f"physical range [{lo}, {hi}] does not cover samples in "
                f"[{samples.min()}, {samples.max()}]"
            )
    if samples_per_record is not None:
        spr = int(samples_per_record)
        if spr < 1 or n % spr:
            raise UsageError(
                f"samples_per_record {spr} does not divide {n} samples"
            )
        if n // spr > _MAX_ASCII_INT:
            raise UsageError("record count does not fit the header field")
        dur = spr / recording.sample_rate_hz
        duration_text = None
        for fmt in ("%.8g", "%.7g", "%.6g"):
            text = fmt % dur
            if len(text) <= 8 and float(text) > 0 and spr / float(text) == recording.sample_rate_hz:
                duration_text = text
                break
        if duration_text is None:
            raise UsageError(
                "record duration is not representable in the 8-byte header field"
            )
    else:
        spr, duration_text = _pick_record_shape(n, recording.sample_rate_hz)
    num_records = n // spr

    def fmt_phys(v):
        for fmt in ("%.8g", "%.7g", "%.6g", "%.5g"):
            text = fmt % v
            if len(text) <= 8:
                return text
        raise RangeError(f"physical bound {v} is not representable in 8 bytes")

    # quantize against the bounds as they will be read back, so the decoder
    # applies exactly the scaling the encoder used
    lo_text, hi_text = fmt_phys(lo), fmt_phys(hi)
    lo_q, hi_q = float(lo_text), float(hi_text)
    if lo_q >= hi_q:
        raise RangeError(
            f"physical range [{lo}, {hi}] collapses in 8-byte header fields"
        )
    dig_min, dig_max = _INT16_MIN, _INT16_MAX
    gain = (hi_q - lo_q) / (dig_max - dig_min)
    scaled = (samples - lo_q) / gain + dig_min
    digital = _round_half_away(scaled)
    np.clip(digital, dig_min, dig_max, out=digital)
    payload = digital.astype("<i2").tobytes()

    patient = (
        f"{recording.subject_id} {recording.activity.value} {recording.gene.value}"
    )
    header = bytearray()
    header += _fit_ascii("0", 8, "version", 0)
    header += _fit_ascii(patient, 80, "patient field", _FIXED_OFFSET["patient"])
    header += _fit_ascii(
        "plethpipe recording", 80, "recording field", _FIXED_OFFSET["recording"]
    )
    header += _fit_ascii("01.01.01", 8, "start date", _FIXED_OFFSET["startdate"])
    header += _fit_ascii("00.00.00", 8, "start time", _FIXED_OFFSET["starttime"])
    header += _fit_ascii(
        _HEADER_SIZE * 2, 8, "header size", _FIXED_OFFSET["header_bytes"]
    )
    header += _fit_ascii("", 44, "reserved", _FIXED_OFFSET["reserved"])
    header += _fit_ascii(num_records, 8, "record count", _FIXED_OFFSET["num_records"])
    header += _fit_ascii(
        duration_text, 8, "record duration", _FIXED_OFFSET["record_duration"]
    )
    header += _fit_ascii(1, 4, "signal count", _FIXED_OFFSET["num_signals"])

    sig = bytearray()
    sig += _fit_ascii(channel_label, 16, "channel label", _HEADER_SIZE)
    sig += _fit_ascii("", 80, "transducer", 0)
    sig += _fit_ascii(
        recording.physical_unit_label, 8, "physical dimension", 0
    )
    sig += _fit_ascii(lo_text, 8, "physical minimum", 0)
    sig += _fit_ascii(hi_text, 8, "physical maximum", 0)
    sig += _fit_ascii(dig_min, 8, "digital minimum", 0)
    sig += _fit_ascii(dig_max, 8, "digital maximum", 0)
    sig += _fit_ascii("", 80, "prefilter", 0)
    sig += _fit_ascii(spr, 8, "samples per record", 0)
    sig += _fit_ascii("", 32, "signal reserved", 0)

    return bytes(header) + bytes(sig) + payload
