#!/usr/bin/env python3
"""
seqsense CLI

Runs spectrum-sensing experiments (Monte-Carlo sweeps, analytic predictions,
threshold calibration) from an INI config and checks the library against its
self-check oracles.
"""

import logging
import sys
from pathlib import Path
from typing import Dict, List, NoReturn, Optional

# Add project root to Python path
ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

try:
    import typer
    from rich.console import Console
    from rich.logging import RichHandler
    from rich.panel import Panel
    from rich.table import Table
except ImportError:
    print("Missing dependencies. Please install with:")
    print("pip install typer rich")
    sys.exit(1)

from job import Job
from oracles import oracle_registry
from oracles.base_oracle import OracleRow
from pipeline import ANALYSIS_SEQUENCE, SERVICE_SEQUENCE, run_pipeline
from seqsense.config import ExperimentConfig, load_config
from seqsense.errors import CalibrationFailure, ConfigurationError, SeqSenseError
from seqsense.montecarlo import SweepPoint, calibrate as calibrate_point, default_calibration_grid
from seqsense.report import curve_row, write_csv, write_curve_csv
from services.centers import main as centers
from services.schedule import main as schedule

app = typer.Typer(help="Nonparametric sequential detection and distributed spectrum sensing")
console = Console()

EXIT_CONFIG = 2
EXIT_TRUNCATED = 3
SELFTEST_FORMAT = "seqsense-selftest/1"


def _config_option():
    return typer.Option(..., "--config", "-c", exists=True, dir_okay=False, help="Experiment INI file")


def _seed_option():
    return typer.Option(None, "--seed", help="Master seed (64-bit)")


def _threads_option():
    return typer.Option(1, "--threads", "-j", min=1, envvar="SEQSENSE_THREADS", help="Worker processes")


def _set_option():
    return typer.Option(None, "--set", help="Override a config key: section.key=value")


def _sweep_option():
    return typer.Option(None, "--sweep", help="Comma-separated threshold scales c")


def _verbose_option():
    return typer.Option(False, "--verbose", "-v", help="Debug logging")


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _overrides(
    sets: Optional[List[str]],
    trials: Optional[int] = None,
    seed: Optional[int] = None,
    sweep: Optional[str] = None,
    out: Optional[Path] = None,
    out_key: str = "output.csv",
) -> Dict[str, str]:
    overrides: Dict[str, str] = {}
    for item in sets or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects section.key=value, got '{item}'")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if trials is not None:
        overrides["sweep.trials"] = str(trials)
    if seed is not None:
        overrides["sweep.seed"] = str(seed)
    if sweep is not None:
        overrides["sweep.c"] = sweep
    if out is not None:
        overrides[out_key] = str(out.resolve())
    return overrides


def _load(path: Path, overrides: Dict[str, str]) -> ExperimentConfig:
    try:
        return load_config(path, overrides)
    except ConfigurationError as e:
        console.print(f"❌ Config error: {e}", style="bold red")
        raise typer.Exit(EXIT_CONFIG)


def _fail(e: SeqSenseError) -> NoReturn:
    if isinstance(e, ConfigurationError):
        console.print(f"❌ Config error: {e}", style="bold red")
        raise typer.Exit(EXIT_CONFIG)
    console.print(f"❌ Error: {e}", style="bold red")
    raise typer.Exit(1)


def _curve_table(points: List[SweepPoint], title: str) -> Table:
    table = Table(title=title)
    for column in ("c", "P_FA", "P_MD", "E0[N]", "E1[N]", "truncated"):
        table.add_column(column, style="cyan" if column == "c" else "white")
    for p in points:
        est = p.estimate
        table.add_row(
            f"{p.c:.4g}",
            f"{est.p_fa:.4g} (≤ {est.p_fa_bound:.2g})",
            f"{est.p_md:.4g} (≤ {est.p_md_bound:.2g})",
            f"{est.e0_n:.4g} ± {est.e0_n_hw:.2g}",
            f"{est.e1_n:.4g} ± {est.e1_n_hw:.2g}",
            str(est.truncated0 + est.truncated1),
        )
    return table


def _outputs_panel(job: Job) -> Panel:
    lines = [f"• {name}: {path}" for name, path in job.outputs.items()]
    lines.append(f"• workspace: {job.workspace}")
    return Panel("\n".join(lines), title="Outputs", border_style="green")


@app.command()
def run(
    config: Path = _config_option(),
    trials: Optional[int] = typer.Option(None, "--trials", "-n", min=1, help="Trials per hypothesis and point"),
    seed: Optional[int] = _seed_option(),
    threads: int = _threads_option(),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Curve CSV path"),
    sweep: Optional[str] = _sweep_option(),
    sets: Optional[List[str]] = _set_option(),
    verbose: bool = _verbose_option(),
):
    """Monte-Carlo sweep with analytic predictions alongside"""
    _setup_logging(verbose)
    try:
        cfg = _load(config, _overrides(sets, trials, seed, sweep, out))
        console.print(f"🚀 Running {len(cfg.sweep.c)} sweep points, {cfg.sweep.trials} trials each", style="bold blue")
        job = run_pipeline(cfg, SERVICE_SEQUENCE, threads=threads)
    except SeqSenseError as e:
        _fail(e)

    console.print(_curve_table(job.points, "Sweep"))
    console.print(_outputs_panel(job))
    worst = max(p.estimate.truncated_fraction for p in job.points)
    if worst > cfg.sweep.max_truncated_fraction:
        console.print(
            f"❌ {worst:.3%} of trials truncated (allowed {cfg.sweep.max_truncated_fraction:.3%})", style="bold red"
        )
        raise typer.Exit(EXIT_TRUNCATED)


@app.command()
def analyze(
    config: Path = _config_option(),
    seed: Optional[int] = _seed_option(),
    threads: int = _threads_option(),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Analysis CSV path"),
    sweep: Optional[str] = _sweep_option(),
    sets: Optional[List[str]] = _set_option(),
    verbose: bool = _verbose_option(),
):
    """Bounds and approximations per sweep point, no simulation"""
    _setup_logging(verbose)
    try:
        cfg = _load(config, _overrides(sets, seed=seed, sweep=sweep, out=out, out_key="output.analysis_csv"))
        job = run_pipeline(cfg, ANALYSIS_SEQUENCE, threads=threads)
    except SeqSenseError as e:
        _fail(e)

    table = Table(title="Analysis")
    for column in ("c", "theta0", "Gamma0", "E0[N] bracket", "approx E0[N]", "approx E1[N]", "status"):
        table.add_column(column, style="cyan" if column == "c" else "white")
    for row in job.analysis:
        table.add_row(
            f"{row.c:.4g}",
            f"{row.theta0:.4g}",
            f"{row.lundberg0:.4g}",
            f"[{row.e0_lower:.4g}, {row.e0_upper:.4g}]",
            f"{row.approx_e0_n:.4g}",
            f"{row.approx_e1_n:.4g}",
            row.status,
        )
    console.print(table)
    console.print(_outputs_panel(job))


@app.command()
def calibrate(
    config: Path = _config_option(),
    target_pfa: Optional[float] = typer.Option(None, "--target-pfa", help="Defaults to sweep.target_pfa"),
    target_pmd: Optional[float] = typer.Option(None, "--target-pmd", help="Defaults to sweep.target_pmd"),
    trials: Optional[int] = typer.Option(None, "--trials", "-n", min=1, help="Trials per hypothesis and point"),
    seed: Optional[int] = _seed_option(),
    threads: int = _threads_option(),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="CSV for the chosen point"),
    sweep: Optional[str] = typer.Option(None, "--sweep", help="Candidate c grid; a log-spaced grid otherwise"),
    sets: Optional[List[str]] = _set_option(),
    verbose: bool = _verbose_option(),
):
    """Smallest-delay thresholds meeting the error targets"""
    _setup_logging(verbose)
    try:
        cfg = _load(config, _overrides(sets, trials, seed, sweep, out))
        job = run_pipeline(cfg, [centers, schedule], threads=threads)
        grid = cfg.sweep.c if sweep is not None else default_calibration_grid()
        point = calibrate_point(
            job.system,
            [(d.e0, d.e1) for d in job.drifts],
            target_pfa if target_pfa is not None else cfg.sweep.target_pfa,
            target_pmd if target_pmd is not None else cfg.sweep.target_pmd,
            cfg.sweep.seed,
            cfg.sweep.trials,
            grid=grid,
            threads=threads,
        )
    except CalibrationFailure as e:
        console.print(f"❌ {e}", style="bold red")
        if e.closest is not None:
            console.print(_curve_table([e.closest], "Closest point"))
        raise typer.Exit(1)
    except SeqSenseError as e:
        _fail(e)

    path = write_curve_csv(job.output_path(cfg.output.csv), [curve_row(point)], cfg.digest(), cfg.sweep.seed)
    console.print(_curve_table([point], "Calibrated point"))
    gammas = ", ".join(f"({g0:.4g}, {g1:.4g})" for g0, g1 in zip(point.schedule.gamma0, point.schedule.gamma1))
    console.print(
        Panel(
            f"• c = {point.c:.6g}\n• node thresholds: {gammas}\n"
            f"• FC thresholds: ({point.schedule.beta0:.4g}, {point.schedule.beta1:.4g})\n• csv: {path}",
            title="Thresholds",
            border_style="green",
        )
    )


@app.command()
def selftest(
    seed: int = typer.Option(1, "--seed", help="Master seed"),
    full: bool = typer.Option(False, "--full", help="Use full sample sizes"),
    only: Optional[List[str]] = typer.Option(None, "--oracle", help="Run only the named oracles"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write results as CSV"),
    save_logs: Optional[Path] = typer.Option(None, "--save-logs", help="Directory for oracle execution logs"),
    verbose: bool = _verbose_option(),
):
    """Run the self-check oracle suite"""
    _setup_logging(verbose)
    names = only or oracle_registry.list_oracles()
    unknown = [n for n in names if oracle_registry.get_oracle(n) is None]
    if unknown:
        console.print(f"❌ Unknown oracle(s): {', '.join(unknown)}", style="bold red")
        raise typer.Exit(EXIT_CONFIG)

    console.print(f"🔎 Running {len(names)} oracle(s)", style="bold blue")
    rows: List[OracleRow] = []
    failed = []
    for name in names:
        result = oracle_registry.execute_oracle(name, seed=seed, fast=not full)
        rows.extend(result["rows"])
        if not result["success"]:
            failed.append(name)
            if "error" in result:
                console.print(f"❌ {name}: {result['error']}", style="bold red")
        if save_logs is not None:
            oracle_registry.get_oracle(name).save_execution_log(save_logs / f"{name}_execution.json")

    table = Table(title="Oracle Results")
    for column in ("Oracle", "Case", "Expected", "Observed", "Tolerance", "Status"):
        table.add_column(column, style="cyan" if column == "Oracle" else "white")
    for r in rows:
        table.add_row(r.oracle, r.case, f"{r.expected:.6g}", f"{r.observed:.6g}", f"{r.tolerance:.3g}",
                      "✅" if r.passed else "❌")
    console.print(table)

    if out is not None:
        write_csv(out, rows, OracleRow, SELFTEST_FORMAT, "none", seed)
        console.print(f"Results written to {out}")
    if failed:
        console.print(f"❌ Failed: {', '.join(failed)}", style="bold red")
        raise typer.Exit(1)
    console.print("✅ All oracles agree", style="bold green")


@app.command()
def list_oracles():
    """List all available self-check oracles"""
    table = Table(title="Available Oracles")
    table.add_column("Oracle Name", style="cyan")
    table.add_column("Description", style="green")
    for name in oracle_registry.list_oracles():
        table.add_row(name, oracle_registry.get_oracle(name).description or "No description available")
    console.print(table)


@app.command()
def show_config(
    config: Path = _config_option(),
    sets: Optional[List[str]] = _set_option(),
):
    """Print the canonical form of a config and its hash"""
    try:
        cfg = _load(config, _overrides(sets))
    except SeqSenseError as e:
        _fail(e)
    typer.echo(cfg.to_ini())
    typer.echo(f"# config-sha256: {cfg.digest()}")


@app.command()
def run_service(
    name: str = typer.Argument(..., help="Name of the service to run"),
    port: int = typer.Option(8000, "--port", "-p", help="Port to run the service on"),
):
    """Run one pipeline stage as an HTTP service"""
    import uvicorn

    service_path = ROOT / "services" / name / "main.py"
    if not service_path.exists():
        console.print(f"❌ Service '{name}' not found at {service_path}", style="bold red")
        raise typer.Exit(1)

    console.print(f"🚀 Starting service '{name}' on port {port}", style="bold green")
    try:
        uvicorn.run(f"services.{name}.main:app", host="0.0.0.0", port=port)
    except KeyboardInterrupt:
        console.print("\n👋 Service stopped", style="yellow")


if __name__ == "__main__":
    app()
