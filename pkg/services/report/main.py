import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from job import Job
from seqsense.report import (
    ANALYSIS_FORMAT,
    CURVE_FORMAT,
    AnalysisRow,
    CurveRow,
    curve_row,
    render_csv,
    write_analysis_csv,
    write_curve_csv,
)

logger = logging.getLogger("service.report")

app = FastAPI(
    title="report Service",
    description="CSV rendering of sweep curves and analysis rows",
    version="1.0.0",
)

ROW_TYPES = {"curve": (CurveRow, CURVE_FORMAT), "analysis": (AnalysisRow, ANALYSIS_FORMAT)}


class RenderRequest(BaseModel):
    kind: str = Field("curve", pattern="^(curve|analysis)$")
    rows: List[Dict[str, Any]]
    digest: str = ""
    seed: int = 0


def _row(row_type: type, values: Dict[str, Any]) -> Any:
    # JSON null stands for a missing estimate
    return row_type(**{k: (math.nan if v is None else v) for k, v in values.items()})


@app.get("/")
async def root():
    return {"service": "report"}


@app.get("/health")
async def health():
    return {"status": "healthy", "service": "report"}


@app.post("/render", response_class=PlainTextResponse)
def render(request: RenderRequest):
    row_type, fmt = ROW_TYPES[request.kind]
    try:
        rows = [_row(row_type, r) for r in request.rows]
    except TypeError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return render_csv(rows, row_type, fmt, request.digest, request.seed)


def process(job: Job) -> Job:
    """Write the curve and analysis CSVs for whatever stages produced rows."""
    digest, seed = job.config.digest(), job.config.sweep.seed
    if job.points:
        analysis = job.analysis if len(job.analysis) == len(job.points) else [None] * len(job.points)
        rows = [curve_row(p, a) for p, a in zip(job.points, analysis)]
        job.outputs["curve"] = write_curve_csv(job.output_path(job.config.output.csv), rows, digest, seed)
        logger.info("wrote %s", job.outputs["curve"])
    if job.analysis:
        path = job.output_path(job.config.output.analysis_csv)
        job.outputs["analysis"] = write_analysis_csv(path, job.analysis, digest, seed)
        logger.info("wrote %s", job.outputs["analysis"])
    job.record_step("report")
    return job


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
