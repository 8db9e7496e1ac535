import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import pytest

from job import Job
from pipeline import ANALYSIS_SEQUENCE, run_pipeline
from seqsense.config import parse_ini
from seqsense.report import read_csv
from services.schedule import main as schedule

EXPECTED_STEPS = [
    "centers",
    "schedule",
    "simulation",
    "approximation",
    "report",
]


def test_run_pipeline(small_ini, tmp_path):
    config = parse_ini(small_ini)
    result = run_pipeline(config, base_dir=tmp_path)
    assert result.steps == EXPECTED_STEPS
    for step in EXPECTED_STEPS:
        marker = result.workspace / f"{step}.txt"
        assert marker.exists()
    assert result.workspace.name == f"job-{config.digest()[:12]}-seed3"
    assert result.centers == [(1.0, 2.0), (1.0, 2.0)]
    assert len(result.points) == len(result.analysis) == 1

    curve = read_csv(result.outputs["curve"])
    assert len(curve) == 1
    assert float(curve[0]["beta1"]) == pytest.approx(2.0)
    assert len(curve[0]["gamma0"].split(";")) == 2
    assert result.outputs["analysis"].exists()


def test_analysis_pipeline_skips_simulation(small_ini, tmp_path):
    config = parse_ini(small_ini)
    result = run_pipeline(config, ANALYSIS_SEQUENCE, base_dir=tmp_path)
    assert result.steps == ["centers", "schedule", "approximation", "report"]
    assert not result.points
    assert "curve" not in result.outputs
    assert read_csv(result.outputs["analysis"])[0]["status"]


def test_pipeline_is_reproducible(small_ini, tmp_path):
    config = parse_ini(small_ini)
    first = run_pipeline(config, base_dir=tmp_path / "a")
    second = run_pipeline(config, base_dir=tmp_path / "b")
    assert first.points == second.points
    assert first.outputs["curve"].read_text() == second.outputs["curve"].read_text()


def test_stage_order_is_enforced(small_ini, tmp_path):
    job = Job.create(parse_ini(small_ini), base_dir=tmp_path)
    with pytest.raises(RuntimeError):
        schedule.process(job)


def test_output_paths(small_ini, tmp_path):
    job = Job.create(parse_ini(small_ini), base_dir=tmp_path)
    assert job.output_path("curve.csv") == job.workspace / "curve.csv"
    absolute = tmp_path / "elsewhere.csv"
    assert job.output_path(str(absolute)) == absolute
