import logging
import sys
from pathlib import Path
from typing import Dict

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from job import Job
from seqsense.config import parse_ini
from seqsense.errors import SeqSenseError
from seqsense.experiment import build_system, resolve_centers

logger = logging.getLogger("service.centers")

app = FastAPI(
    title="centers Service",
    description="Pre-run estimation of the per-node test centers",
    version="1.0.0",
)


class MeansRequest(BaseModel):
    config: str = Field(..., description="Experiment config as INI text")
    overrides: Dict[str, str] = Field(default_factory=dict)


@app.get("/")
async def root():
    return {"service": "centers"}


@app.get("/health")
async def health():
    return {"status": "healthy", "service": "centers"}


@app.post("/estimate-means")
def estimate_means(request: MeansRequest):
    try:
        config = parse_ini(request.config, request.overrides)
        centers = resolve_centers(config)
    except SeqSenseError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return {
        "service": "centers",
        "centers": [{"node": l + 1, "mu0": mu0, "mu1": mu1} for l, (mu0, mu1) in enumerate(centers)],
    }


def process(job: Job) -> Job:
    """Resolve the node centers and build the system model."""
    job.centers = resolve_centers(job.config)
    job.system = build_system(job.config, job.centers)
    for l, (mu0, mu1) in enumerate(job.centers, start=1):
        logger.info("node %d centers: mu0=%g mu1=%g", l, mu0, mu1)
    job.record_step("centers")
    return job


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
