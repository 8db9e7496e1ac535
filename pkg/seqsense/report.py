"""CSV emission for sweep curves and analysis reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

CURVE_FORMAT = "seqsense-curve/2"
ANALYSIS_FORMAT = "seqsense-analysis/1"


@dataclass(frozen=True)
class CurveRow:
    c: float
    gamma0: Sequence[float]
    gamma1: Sequence[float]
    beta0: float
    beta1: float
    p_fa: float
    p_fa_hw: float
    p_md: float
    p_md_hw: float
    e0_n: float
    e0_n_hw: float
    e1_n: float
    e1_n_hw: float
    truncated0: int
    truncated1: int
    approx_e0_n: float = math.nan
    approx_e1_n: float = math.nan
    approx_p_fa_lo: float = math.nan
    approx_p_fa_hi: float = math.nan
    # exact (Clopper-Pearson) below 10 errors, p + hw otherwise
    p_fa_upper: float = math.nan
    p_md_upper: float = math.nan


@dataclass(frozen=True)
class AnalysisRow:
    c: float
    beta0: float
    beta1: float
    theta0: float
    theta1: float
    lundberg0: float
    lundberg1: float
    e0_lower: float
    e0_upper: float
    pfa_light: float
    approx_e0_n: float
    approx_e1_n: float
    approx_p_fa_lo: float
    approx_p_fa_hi: float
    approx_p_md_lo: float
    approx_p_md_hi: float
    status: str = "ok"


def format_value(value: Any) -> str:
    """Shortest round-trip text; per-node sequences are joined with ';'."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    return str(value)


def render_csv(rows: Iterable[Any], row_type: type, fmt: str, digest: str, seed: int) -> str:
    buffer = io.StringIO()
    buffer.write(f"# format: {fmt}\n")
    buffer.write(f"# config-sha256: {digest}\n")
    buffer.write(f"# seed: {seed}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f.name for f in fields(row_type)])
    for row in rows:
        writer.writerow([format_value(v) for v in astuple(row)])
    return buffer.getvalue()


def write_csv(path: Union[str, Path], rows: Sequence[Any], row_type: type, fmt: str, digest: str, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(rows, row_type, fmt, digest, seed), encoding="utf-8")
    return path


def write_curve_csv(path: Union[str, Path], rows: Sequence[CurveRow], digest: str, seed: int) -> Path:
    return write_csv(path, rows, CurveRow, CURVE_FORMAT, digest, seed)


def write_analysis_csv(path: Union[str, Path], rows: Sequence[AnalysisRow], digest: str, seed: int) -> Path:
    return write_csv(path, rows, AnalysisRow, ANALYSIS_FORMAT, digest, seed)


def to_jsonable(value: Any) -> Any:
    """Dataclasses, tuples and enums as plain JSON values; NaN and inf become None."""
    if is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


def read_csv(path: Union[str, Path]) -> List[dict]:
    """Rows of a report written by this module, comment lines skipped."""
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def curve_row(point: Any, analysis: Optional[AnalysisRow] = None) -> CurveRow:
    """CurveRow from a montecarlo SweepPoint and, optionally, its analysis row."""
    est, sched = point.estimate, point.schedule
    return CurveRow(
        c=point.c,
        gamma0=tuple(sched.gamma0),
        gamma1=tuple(sched.gamma1),
        beta0=sched.beta0,
        beta1=sched.beta1,
        p_fa=est.p_fa,
        p_fa_hw=est.p_fa_hw,
        p_md=est.p_md,
        p_md_hw=est.p_md_hw,
        e0_n=est.e0_n,
        e0_n_hw=est.e0_n_hw,
        e1_n=est.e1_n,
        e1_n_hw=est.e1_n_hw,
        truncated0=est.truncated0,
        truncated1=est.truncated1,
        approx_e0_n=analysis.approx_e0_n if analysis else math.nan,
        approx_e1_n=analysis.approx_e1_n if analysis else math.nan,
        approx_p_fa_lo=analysis.approx_p_fa_lo if analysis else math.nan,
        approx_p_fa_hi=analysis.approx_p_fa_hi if analysis else math.nan,
        p_fa_upper=est.p_fa_upper,
        p_md_upper=est.p_md_upper,
    )
