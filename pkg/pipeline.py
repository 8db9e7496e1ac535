"""Sequential experiment pipeline over the service modules."""
from pathlib import Path
from types import ModuleType
from typing import Optional, Sequence

from job import Job
from seqsense.config import ExperimentConfig

from services.centers import main as centers
from services.schedule import main as schedule
from services.simulation import main as simulation
from services.approximation import main as approximation
from services.report import main as report

SERVICE_SEQUENCE = [
    centers,
    schedule,
    simulation,
    approximation,
    report,
]

ANALYSIS_SEQUENCE = [centers, schedule, approximation, report]


def run_pipeline(
    config: ExperimentConfig,
    stages: Optional[Sequence[ModuleType]] = None,
    base_dir: Optional[Path] = None,
    threads: int = 1,
) -> Job:
    """Run an experiment by passing a job through each service."""
    job = Job.create(config, base_dir=base_dir, threads=threads)
    for module in stages if stages is not None else SERVICE_SEQUENCE:
        job = module.process(job)
    return job
