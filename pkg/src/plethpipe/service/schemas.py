"""Request and response bodies for the analysis service.

The service runs next to the data: requests carry file paths on the
service host, responses carry the paths of what was written plus enough
of the result to render a summary without re-reading the files.
"""

from pydantic import BaseModel, Field

from ..segmentation import DURATION_MIN_S
from ..sigh_analysis import N_CONTEXT, SIGH_DURATION_MIN_S


class IngestRequest(BaseModel):
    edf_paths: list[str]
    out_dir: str
    labels_path: str | None = None
    sap_threshold: float = 9.0
    sap_symmetric: bool = False
    duration_min_s: float = DURATION_MIN_S
    min_dev_max: float | None = None
    channel_label: str = "flow"


class IngestResponse(BaseModel):
    database: str
    manifest: str
    rows: int
    counters: dict[str, int]


class ComparisonRowModel(BaseModel):
    metric_name: str
    comparison_type: str
    phase: str
    cat1_label: str
    cat2_label: str
    cat1_mean: float
    cat1_std: float
    cat2_mean: float
    cat2_std: float
    means_difference: float
    p_value: float
    sigh_impact: float | None = None


class CompareRequest(BaseModel):
    database: str
    comparison: str
    out_dir: str
    test: str = "ks"
    bins: int = Field(default=50, ge=1)
    pooled: bool = False


class CompareResponse(BaseModel):
    table: str
    histograms: str
    manifest: str
    rows: list[ComparisonRowModel]


class SighRequest(BaseModel):
    database: str
    rest_config: str
    out_dir: str
    exclusions: str | None = None
    context_depth: int = N_CONTEXT
    sigh_duration_min_s: float = SIGH_DURATION_MIN_S
    pooled: bool = False


class SighResponse(BaseModel):
    aggregates: str
    table: str
    manifest: str
    rows: list[ComparisonRowModel]
    counters: dict[str, int]
    warnings: list[str] = []


class SynthRequest(BaseModel):
    profile: str
    out_edf: str
    out_truth: str
    out_dir: str | None = None
    channel_label: str = "flow"


class SynthResponse(BaseModel):
    edf: str
    truth: str
    manifest: str
    breaths: int
