import logging
import sys
from pathlib import Path
from typing import List, Tuple

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from job import Job
from seqsense.errors import SeqSenseError
from seqsense.experiment import node_drifts, schedules
from seqsense.montecarlo import threshold_schedule
from seqsense.report import to_jsonable

logger = logging.getLogger("service.schedule")

app = FastAPI(
    title="schedule Service",
    description="Threshold schedules from node drift estimates",
    version="1.0.0",
)


class ScheduleRequest(BaseModel):
    c: float = Field(..., description="Threshold scale in (0, 1]")
    drifts: List[Tuple[float, float]] = Field(..., min_length=1, description="Per-node (E0[W], E1[W])")


@app.get("/")
async def root():
    return {"service": "schedule"}


@app.get("/health")
async def health():
    return {"status": "healthy", "service": "schedule"}


@app.post("/schedule")
def schedule(request: ScheduleRequest):
    try:
        result = threshold_schedule(request.c, request.drifts)
    except SeqSenseError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return {"service": "schedule", "schedule": to_jsonable(result)}


def process(job: Job) -> Job:
    """Estimate node drifts and derive one threshold schedule per sweep point."""
    if job.system is None:
        raise RuntimeError("schedule needs the centers stage to run first")
    job.drifts = node_drifts(job.config, job.system)
    for l, d in enumerate(job.drifts, start=1):
        logger.info("node %d drifts: E0=%g E1=%g", l, d.e0, d.e1)
    job.schedules = schedules(job.config, job.drifts)
    job.record_step("schedule")
    return job


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
