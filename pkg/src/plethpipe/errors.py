"""Exception hierarchy shared by the library, the service, and the CLI.

Every error carries a ``kind`` discriminator so callers can map failures to
process exit codes and HTTP payloads without string matching:

    usage        -> exit 2   bad parameters, bad configuration values
    data         -> exit 3   malformed or inconsistent input files
    insufficient -> exit 4   inputs well formed but too small or degenerate
"""


class PipelineError(Exception):
    kind = "error"


class UsageError(PipelineError):
    """Caller passed an invalid parameter or option value."""

    kind = "usage"


class DataFormatError(PipelineError):
    """Input file is malformed or internally inconsistent."""

    kind = "data"


class HeaderFormatError(DataFormatError):
    """Malformed recording header. ``byte_offset`` locates the bad field."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class TruncatedDataError(DataFormatError):
    """Payload shorter than the header promises."""

    def __init__(self, message, expected_bytes=None, actual_bytes=None):
        if expected_bytes is not None:
            message = f"{message} (expected {expected_bytes} bytes, got {actual_bytes})"
        super().__init__(message)
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes


class ChannelNotFoundError(DataFormatError):
    """Requested channel label missing from the recording."""

    def __init__(self, label, available):
        super().__init__(
            f"channel {label!r} not found; available: {sorted(available)!r}"
        )
        self.label = label
        self.available = list(available)


class RangeError(UsageError):
    """Requested physical range does not cover the samples being written."""


class ConfigError(DataFormatError):
    """Analysis configuration file references data that does not exist."""


class InsufficientDataError(PipelineError):
    """Input is valid but too short or too degenerate to analyze."""

    kind = "insufficient"


EXIT_CODES = {"usage": 2, "data": 3, "insufficient": 4, "error": 1}


def exit_code_for(err: PipelineError) -> int:
    return EXIT_CODES.get(getattr(err, "kind", "error"), 1)
