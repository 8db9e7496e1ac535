import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from job import Job
from seqsense.config import parse_ini
from seqsense.errors import SeqSenseError
from seqsense.experiment import build_system, node_drifts, resolve_centers, safe_analyze_point, schedules
from seqsense.report import to_jsonable

logger = logging.getLogger("service.approximation")

app = FastAPI(
    title="approximation Service",
    description="Analytic bounds and approximations next to each sweep point",
    version="1.0.0",
)


class AnalyzeRequest(BaseModel):
    config: str = Field(..., description="Experiment config as INI text")
    overrides: Dict[str, str] = Field(default_factory=dict)
    c: Optional[List[float]] = Field(None, description="Threshold scales; the config sweep when omitted")


@app.get("/")
async def root():
    return {"service": "approximation"}


@app.get("/health")
async def health():
    return {"status": "healthy", "service": "approximation"}


@app.post("/analyze")
def analyze(request: AnalyzeRequest):
    overrides = dict(request.overrides)
    if request.c:
        overrides["sweep.c"] = ", ".join(repr(c) for c in request.c)
    try:
        config = parse_ini(request.config, overrides)
        system = build_system(config, resolve_centers(config))
        drifts = node_drifts(config, system)
        rows = [safe_analyze_point(config, system, drifts, s) for s in schedules(config, drifts)]
    except SeqSenseError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return {"service": "approximation", "rows": to_jsonable(rows)}


def process(job: Job) -> Job:
    """Attach an analysis row to every threshold schedule."""
    if job.system is None or not job.schedules:
        raise RuntimeError("approximation needs the centers and schedule stages to run first")
    job.analysis = [safe_analyze_point(job.config, job.system, job.drifts, s) for s in job.schedules]
    for row in job.analysis:
        if row.status != "ok":
            logger.warning("c=%g: %s", row.c, row.status)
    job.record_step("approximation")
    return job


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
