"""HTTP facade over the pipeline commands.

Every pipeline failure derives from PipelineError and carries a ``kind``;
the handler below turns them into 400 responses whose detail keeps that
kind, so clients (the bundled CLI included) can map failures to exit
codes without parsing messages. Request validation failures stay on
FastAPI's default 422.
"""

import warnings
from dataclasses import asdict

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..errors import PipelineError
from .schemas import (
    CompareRequest,
    CompareResponse,
    IngestRequest,
    IngestResponse,
    SighRequest,
    SighResponse,
    SynthRequest,
    SynthResponse,
)


def create_app() -> FastAPI:
    app = FastAPI(title="plethpipe", version=__version__)

    @app.exception_handler(PipelineError)
    async def pipeline_error(request, exc):
        return JSONResponse(
            status_code=400,
            content={"detail": {"kind": exc.kind, "message": str(exc)}},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/ingest", response_model=IngestResponse)
    def ingest(req: IngestRequest):
        options = pipeline.IngestOptions(
            sap_threshold=req.sap_threshold,
            sap_symmetric=req.sap_symmetric,
            duration_min_s=req.duration_min_s,
            min_dev_max=req.min_dev_max,
            channel_label=req.channel_label,
        )
        out = pipeline.ingest(req.edf_paths, req.labels_path, req.out_dir,
                              options)
        return IngestResponse(**out)

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: CompareRequest):
        out = pipeline.compare(req.database, req.comparison, req.test,
                               req.out_dir, bins=req.bins, pooled=req.pooled)
        out["rows"] = [asdict(r) for r in out["rows"]]
        return CompareResponse(**out)

    @app.post("/sigh", response_model=SighResponse)
    def sigh(req: SighRequest):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = pipeline.sigh(
                req.database, req.rest_config, req.out_dir,
                exclusions_path=req.exclusions,
                context_depth=req.context_depth,
                sigh_duration_min=req.sigh_duration_min_s,
                pooled=req.pooled,
            )
        out["rows"] = [asdict(r) for r in out["rows"]]
        return SighResponse(**out,
                            warnings=[str(w.message) for w in caught])

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest):
        out = pipeline.synth_run(req.profile, req.out_edf, req.out_truth,
                                 out_dir=req.out_dir,
                                 channel_label=req.channel_label)
        return SynthResponse(**out)

    return app
