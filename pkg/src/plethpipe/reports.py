"""Report and database emission with byte-stable formatting.

All numeric output uses 9 significant digits; p-value-like columns are
additionally fixed to 5 decimals, which is how the source tables report
them. Nothing here writes timestamps, so identical inputs and flags
produce byte-identical files.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import pandas as pd

from . import __version__
from .errors import DataFormatError
from .stats_compare import COMPARISON_COLUMNS

WAVEFORM_COLUMNS = [f"w{i:03d}" for i in range(400)]
METRIC_COLUMNS = [
    "duration_s", "Ti", "Te", "Tr", "PIP", "PEP", "Pause", "Penh",
    "E0", "E1", "E2", "E3", "E4",
]
DB_COLUMNS = (
    ["subject_id", "activity", "gene", "start_time_s", "end_time_s",
     "native_length"]
    + WAVEFORM_COLUMNS
    + METRIC_COLUMNS
)

FLOAT_FORMAT = "%.9g"
P_VALUE_FORMAT = "%.5f"


def fmt(v) -> str:
    """Render one float at 9 significant digits; empty for None."""
    if v is None:
        return ""
    return FLOAT_FORMAT % v


def write_breath_database(chunks, path) -> int:
    """Stream chunks of row dicts to the database CSV; returns row count."""
    total = 0
    first = True
    with open(path, "w", newline="") as fh:
        for chunk in chunks:
            if len(chunk) == 0:
                continue
            if isinstance(chunk, pd.DataFrame):
                frame = chunk.loc[:, DB_COLUMNS]
            else:
                frame = pd.DataFrame(chunk, columns=DB_COLUMNS)
            frame.to_csv(fh, index=False, header=first,
                         float_format=FLOAT_FORMAT)
            total += len(frame)
            first = False
        if first:
            # no rows at all: still emit the header so the file is valid
            pd.DataFrame(columns=DB_COLUMNS).to_csv(fh, index=False)
    return total


def read_breath_database(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise DataFormatError(f"cannot read database {path}: {e}") from e
    missing = [c for c in DB_COLUMNS if c not in frame.columns]
    if missing:
        raise DataFormatError(
            f"{path} is not a breath database: missing columns "
            f"{missing[:4]}{'...' if len(missing) > 4 else ''}"
        )
    return frame


def write_comparison_table(rows, path) -> None:
    """Emit ComparisonRows in the fixed column order."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(COMPARISON_COLUMNS) + "\n")
        for r in rows:
            impact = "" if r.sigh_impact is None else P_VALUE_FORMAT % r.sigh_impact
            fh.write(",".join([
                r.metric_name, r.comparison_type, r.phase,
                r.cat1_label, r.cat2_label,
                fmt(r.cat1_mean), fmt(r.cat1_std),
                fmt(r.cat2_mean), fmt(r.cat2_std),
                fmt(r.means_difference),
                P_VALUE_FORMAT % r.p_value,
                impact,
            ]) + "\n")


def write_histograms(per_metric, path) -> None:
    """per_metric: {metric_name: {category_label: (edges, counts)}}."""
    with open(path, "w", newline="") as fh:
        fh.write("metric_name,category,bin_left,bin_right,count\n")
        for metric in sorted(per_metric):
            for category in sorted(per_metric[metric]):
                edges, counts = per_metric[metric][category]
                for i, c in enumerate(counts):
                    fh.write(
                        f"{metric},{category},{fmt(edges[i])},"
                        f"{fmt(edges[i + 1])},{int(c)}\n"
                    )


def write_position_aggregates(per_metric, path) -> None:
    """per_metric: {metric_name: list of (count, BoxStats or None)}."""
    with open(path, "w", newline="") as fh:
        fh.write("metric_name,position,count,median,q1,q3,"
                 "whisker_low,whisker_high,outlier_count\n")
        for metric in sorted(per_metric):
            for pos, (count, stats) in enumerate(per_metric[metric], start=1):
                if stats is None:
                    fh.write(f"{metric},{pos},0,,,,,,0\n")
                    continue
                fh.write(",".join([
                    metric, str(pos), str(count),
                    fmt(stats.median), fmt(stats.q1), fmt(stats.q3),
                    fmt(stats.whisker_low), fmt(stats.whisker_high),
                    str(len(stats.outliers)),
                ]) + "\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e}") from e
    with fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility ledger for one command invocation."""

    command: str
    version: str = __version__
    inputs: dict = field(default_factory=dict)    # path -> sha256
    parameters: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)


def write_manifest(manifest: RunManifest, path) -> None:
    payload = asdict(manifest)
    # keys sorted and no timestamps, so reruns are byte-identical
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
