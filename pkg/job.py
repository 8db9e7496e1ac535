from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from seqsense.config import ExperimentConfig
from seqsense.montecarlo import DriftEstimate, SweepPoint, ThresholdSchedule
from seqsense.nodes import SystemModel
from seqsense.report import AnalysisRow


@dataclass
class Job:
    """Experiment state passed between pipeline services."""

    config: ExperimentConfig
    workspace: Path
    threads: int = 1
    steps: List[str] = field(default_factory=list)
    centers: List[Tuple[float, float]] = field(default_factory=list)
    system: Optional[SystemModel] = None
    drifts: List[DriftEstimate] = field(default_factory=list)
    schedules: List[ThresholdSchedule] = field(default_factory=list)
    points: List[SweepPoint] = field(default_factory=list)
    analysis: List[AnalysisRow] = field(default_factory=list)
    outputs: Dict[str, Path] = field(default_factory=dict)

    @classmethod
    def create(cls, config: ExperimentConfig, base_dir: Path | None = None, threads: int = 1) -> "Job":
        """Create a job whose workspace is named after the config hash and seed."""
        base = base_dir or Path(config.output.workspace)
        workspace = base / f"job-{config.digest()[:12]}-seed{config.sweep.seed}"
        workspace.mkdir(parents=True, exist_ok=True)
        return cls(config=config, workspace=workspace, threads=threads)

    def output_path(self, name: str) -> Path:
        """Resolve a configured output file; relative names land in the workspace."""
        path = Path(name)
        return path if path.is_absolute() else self.workspace / path

    def record_step(self, name: str) -> None:
        """Append a step name to the trace and create a marker file."""
        self.steps.append(name)
        marker = self.workspace / f"{name}.txt"
        marker.write_text(name)
