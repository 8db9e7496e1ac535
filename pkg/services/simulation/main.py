import logging
import sys
from pathlib import Path
from typing import Dict, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from job import Job
from seqsense.config import parse_ini
from seqsense.errors import SeqSenseError
from seqsense.experiment import build_system, node_drifts, resolve_centers
from seqsense.montecarlo import apply_schedule, estimate, sweep, threshold_schedule
from seqsense.report import to_jsonable

logger = logging.getLogger("service.simulation")

app = FastAPI(
    title="simulation Service",
    description="Monte-Carlo estimation of error probabilities and detection delays",
    version="1.0.0",
)


class EstimateRequest(BaseModel):
    config: str = Field(..., description="Experiment config as INI text")
    overrides: Dict[str, str] = Field(default_factory=dict)
    c: float = Field(..., gt=0, le=1)
    trials: Optional[int] = Field(None, ge=1)


@app.get("/")
async def root():
    return {"service": "simulation"}


@app.get("/health")
async def health():
    return {"status": "healthy", "service": "simulation"}


@app.post("/estimate")
def estimate_point(request: EstimateRequest):
    try:
        config = parse_ini(request.config, request.overrides)
        system = build_system(config, resolve_centers(config))
        drifts = node_drifts(config, system)
        schedule = threshold_schedule(request.c, [(d.e0, d.e1) for d in drifts])
        result = estimate(
            apply_schedule(system, schedule),
            request.trials or config.sweep.trials,
            config.sweep.seed,
        )
    except SeqSenseError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return {"service": "simulation", "schedule": to_jsonable(schedule), "estimate": to_jsonable(result)}


def process(job: Job) -> Job:
    """Run the Monte-Carlo sweep over the configured threshold scales."""
    if job.system is None or not job.drifts:
        raise RuntimeError("simulation needs the centers and schedule stages to run first")
    sweep_cfg = job.config.sweep
    job.points = sweep(
        job.system,
        [(d.e0, d.e1) for d in job.drifts],
        sweep_cfg.c,
        sweep_cfg.trials,
        sweep_cfg.seed,
        threads=job.threads,
    )
    for point in job.points:
        est = point.estimate
        if est.truncated0 or est.truncated1:
            logger.warning(
                "c=%g: %d/%d trials hit the slot limit", point.c, est.truncated0 + est.truncated1, 2 * est.n_trials
            )
    job.record_step("simulation")
    return job


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
