from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional

import typer
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .burst.burst_io import write_burst
from .burst.pipeline import (
    FLAT_KEYS,
    PipelineConfig,
    compare_with_baseline,
    evaluate_result,
    load_config_file,
    run_pipeline,
)
from .burst.simulation import PRESETS, SensorModel, simulate_burst
from .core.data_formats import DataExporter, DataImporter
from .core.errors import BurstError
from .core.settings import Settings
from .core.storage import RunRecord, list_runs, save_run
from .core.validation import SystemValidator

app = typer.Typer(add_completion=False, help="Gyro-aided burst alignment and merging")
console = Console()

EXIT_INPUT_ERROR = 2
EXIT_NO_VALID_FRAMES = 3


def _banner() -> None:
    console.print(
        Panel.fit(
            f"[bold]gyroburst[/bold] {__version__}\nGyro + UKF burst alignment and Wiener merging\n",
            border_style="cyan",
        )
    )


def _fail(message: str, code: int = EXIT_INPUT_ERROR) -> None:
    console.print(f"[red]Error:[/red] {message}")
    raise typer.Exit(code)


def _register(kind: str, input: str, output: str, meta: Dict[str, Any]) -> str:
    record = RunRecord.new(kind, input, output, meta)
    save_run(record)
    console.print(f"\n[run_id] {record.id}", markup=False)
    return record.id


def _parse_sets(items: List[str]) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            _fail(f"--set expects key=value, got {item!r}")
        values[key.strip()] = value.strip()
    return values


def _build_config(flags: Dict[str, Any], sets: List[str], config: Optional[Path], workers: Optional[int]) -> PipelineConfig:
    """Flags first, then ``--set`` pairs, then the config file; later sources win."""
    settings = Settings.from_env()
    flags = {**flags, "workers": workers or settings.workers}
    cfg = PipelineConfig().with_overrides(flags)
    cfg = cfg.with_overrides(_parse_sets(sets))
    if config is not None:
        cfg = load_config_file(config, cfg)
    return cfg


def _frame_table(frames: List[Dict[str, Any]], threshold: float) -> Table:
    table = Table(title="Frames", show_header=True, header_style="bold")
    table.add_column("Frame", justify="right")
    table.add_column("Path")
    table.add_column("Matches", justify="right")
    table.add_column("Inliers", justify="right")
    table.add_column("Steady err (px)", justify="right")
    table.add_column("Shift")
    table.add_column("Valid")
    table.add_column("Note", style="dim")
    for f in frames:
        err = f["steady_error"]
        err_text = f"{err:.3f}" if isinstance(err, (int, float)) else str(err)
        valid = "[green]yes[/green]" if f["valid"] else "[red]no[/red]"
        shift = f"({f['fallback_shift'][0]:+.0f}, {f['fallback_shift'][1]:+.0f})"
        table.add_row(str(f["frame_id"]), f["path"], str(f["feature_count"]), str(f["inlier_count"]),
                      err_text, shift, valid, f.get("reason") or "")
    table.caption = f"threshold {threshold:g} px"
    return table


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
    log_file: Optional[str] = typer.Option(None, help="Also log to this file"),
) -> None:
    settings = Settings.from_env()
    settings.verbose = settings.verbose or verbose
    settings.log_file = log_file or settings.log_file
    settings.setup_logging()


@app.command()
def align(
    burst_dir: Path = typer.Argument(..., help="Burst directory (frames, gyro.csv, timing.json, camera.json)"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="Output directory"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="key=value config file (overrides flags)"),
    mode: Optional[str] = typer.Option(None, help="full|features_only|gyro_only"),
    seed: Optional[int] = typer.Option(None, help="RANSAC seed"),
    workers: Optional[int] = typer.Option(None, help="Per-frame worker threads"),
    tile: Optional[int] = typer.Option(None, help="Merge tile size (8, 16, 32, 64)"),
    max_frames: Optional[int] = typer.Option(None, help="Maximum frames to merge"),
    threshold: Optional[float] = typer.Option(None, help="Steady-error threshold (px)"),
    noise_variance: Optional[float] = typer.Option(None, help="Frame noise variance; estimated if omitted"),
    search_radius: Optional[int] = typer.Option(None, help="Feature search radius (px)"),
    max_corners: Optional[int] = typer.Option(None, help="Harris corners in the reference"),
    rk4_step_ns: Optional[int] = typer.Option(None, help="Gyro integration step (ns)"),
    gyro_offset_ns: Optional[int] = typer.Option(None, help="Camera-to-gyro clock offset (ns)"),
    set_: List[str] = typer.Option([], "--set", "-s", help="Any configuration key as key=value"),
    plots: bool = typer.Option(False, help="Write steady-error and UKF convergence plots"),
) -> None:
    """Align and merge a burst directory."""
    flags = {
        "mode": mode, "seed": seed, "tile": tile, "max_frames": max_frames,
        "steady_error_threshold": threshold, "noise_variance": noise_variance,
        "search_radius": search_radius, "max_corners": max_corners,
        "rk4_step_ns": rk4_step_ns, "gyro_time_offset_ns": gyro_offset_ns,
    }
    output = output or Path(Settings.from_env().output_dir)
    try:
        cfg = _build_config(flags, set_, config, workers)
        _, report_path = run_pipeline(burst_dir, cfg, output, plots=plots)
    except (BurstError, ValueError) as e:
        _fail(str(e))
    report = DataImporter.from_json(report_path)
    console.print(_frame_table(report["frames"], cfg.merge.steady_error_threshold))
    console.print(
        f"Merged {report['merged_frames']} of {report['n_frames']} frames; "
        f"noise sigma {report['noise_sigma']:.5f} ({report['noise_source']}) "
        f"-> predicted {report['predicted_residual_sigma']:.5f}"
    )
    if "metrics" in report and "psnr_merged" in report["metrics"]:
        m = report["metrics"]
        console.print(f"PSNR {m['psnr_reference']:.2f} dB -> {m['psnr_merged']:.2f} dB (+{m['psnr_gain']:.2f})")
    console.print(f"Output: {output}")
    _register("align", str(burst_dir), str(report_path), {
        "merged_frames": report["merged_frames"], "mode": cfg.mode, "seed": cfg.seed,
    })
    if report["n_frames"] > 1 and report["n_valid_alternatives"] == 0:
        _fail("no valid alternative frames; output is the reference alone", EXIT_NO_VALID_FRAMES)


@app.command()
def simulate(
    output: Path = typer.Argument(..., help="Directory to write the burst into"),
    preset: str = typer.Option("offset", help=f"Motion preset: {'|'.join(PRESETS)}"),
    frames: int = typer.Option(16, help="Number of frames"),
    seed: int = typer.Option(0, help="Random seed"),
    width: int = typer.Option(256, help="Frame width"),
    height: int = typer.Option(256, help="Frame height"),
    focal: float = typer.Option(300.0, help="Focal length (px)"),
    noise: float = typer.Option(0.02, help="Image noise sigma"),
    gyro_noise: float = typer.Option(0.001, help="Gyro noise sigma (rad/s)"),
    gyro_bias: float = typer.Option(0.002, help="Gyro bias per axis (rad/s)"),
    gyro_rate: float = typer.Option(200.0, help="Gyro sample rate (Hz)"),
    frame_rate: float = typer.Option(30.0, help="Frame rate (Hz)"),
) -> None:
    """Render a ground-truth burst from a motion preset."""
    try:
        sensor = SensorModel(
            gyro_rate=gyro_rate, gyro_noise_sigma=gyro_noise, gyro_bias=(gyro_bias,) * 3,
            frame_rate=frame_rate, image_noise_sigma=noise,
        )
        burst = simulate_burst(preset, frames, seed, sensor, width, height, focal)
        write_burst(burst.to_burst(), output)
    except (BurstError, ValueError) as e:
        _fail(str(e))
    console.print(f"[green]Wrote {frames}-frame '{preset}' burst to {output}[/green]")
    _register("simulate", preset, str(output), {"frames": frames, "seed": seed, "noise": noise})


@app.command()
def evaluate(
    burst_dir: Path = typer.Argument(..., help="Simulated burst directory with truth.json"),
    merged: Path = typer.Argument(..., help="Merged image to score"),
    report: Optional[Path] = typer.Option(None, help="Run report for per-frame homography errors"),
    output: Path = typer.Option(Path("metrics.json"), "--output", "-o", help="Metrics JSON"),
    baseline: bool = typer.Option(True, help="Also count valid frames against the translation-only baseline"),
    seed: int = typer.Option(0, help="RANSAC seed for the baseline comparison"),
) -> None:
    """Score a merged image against ground truth."""
    try:
        metrics = evaluate_result(burst_dir, merged, report, PipelineConfig(seed=seed), baseline)
    except (BurstError, ValueError) as e:
        _fail(str(e))
    DataExporter.to_json(metrics, output)
    table = Table(title="Evaluation", show_header=True, header_style="bold")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    for key in ("psnr_reference", "psnr_merged", "psnr_gain", "median_homography_error"):
        if key in metrics:
            table.add_row(key, f"{metrics[key]:.3f}")
    if "baseline" in metrics:
        b = metrics["baseline"]
        table.add_row("valid frames (pipeline)", f"{b['pipeline_valid']}/{b['alternatives']}")
        table.add_row("valid frames (baseline)", f"{b['baseline_valid']}/{b['alternatives']}")
    console.print(table)
    console.print(f"Metrics: {output}")


@app.command()
def demo(
    output: Path = typer.Option(Path("demo_out"), "--output", "-o", help="Output directory"),
    preset: str = typer.Option("offset", help=f"Motion preset: {'|'.join(PRESETS)}"),
    frames: int = typer.Option(16, help="Number of frames"),
    seed: int = typer.Option(0, help="Random seed"),
    mode: str = typer.Option("full", help="full|features_only|gyro_only"),
    plots: bool = typer.Option(True, help="Write diagnostic plots"),
) -> None:
    """Simulate a burst, align and merge it, and score the result."""
    _banner()
    burst_dir = output / "burst"
    try:
        simulated = simulate_burst(preset, frames, seed)
        write_burst(simulated.to_burst(), burst_dir)
        cfg = PipelineConfig(seed=seed, mode=mode)
        merged, report_path = run_pipeline(burst_dir, cfg, output, plots=plots)
        comparison = compare_with_baseline(simulated, cfg)
    except (BurstError, ValueError) as e:
        _fail(str(e))
    report = DataImporter.from_json(report_path)
    console.print(_frame_table(report["frames"], cfg.merge.steady_error_threshold))
    m = report.get("metrics", {})
    summary = Table(title="Demo summary", show_header=True, header_style="bold")
    summary.add_column("Metric")
    summary.add_column("Value", justify="right")
    summary.add_row("merged frames", str(report["merged_frames"]))
    summary.add_row("single-frame PSNR (dB)", f"{m.get('psnr_reference', float('nan')):.2f}")
    summary.add_row("merged PSNR (dB)", f"{m.get('psnr_merged', float('nan')):.2f}")
    summary.add_row("predicted residual sigma", f"{report['predicted_residual_sigma']:.5f}")
    summary.add_row("valid frames (pipeline)", f"{comparison['pipeline_valid']}/{comparison['alternatives']}")
    summary.add_row("valid frames (baseline)", f"{comparison['baseline_valid']}/{comparison['alternatives']}")
    console.print(summary)
    _register("demo", preset, str(output), {
        "frames": frames, "seed": seed, "mode": mode,
        "psnr_gain": m.get("psnr_gain"), **comparison,
    })
    if report["n_frames"] > 1 and report["n_valid_alternatives"] == 0:
        _fail("no valid alternative frames", EXIT_NO_VALID_FRAMES)


@app.command()
def doctor(
    burst_dir: Optional[Path] = typer.Argument(None, help="Optional burst directory to check"),
) -> None:
    """Check the environment and, optionally, a burst directory."""
    _banner()
    validator = SystemValidator(burst_dir)
    results = validator.run_all_checks()

    table = Table(title="System Validation Report")
    table.add_column("Check", style="bold", width=20)
    table.add_column("Status", width=8)
    table.add_column("Details", style="dim")
    for name, result in results.items():
        style = {"pass": "green", "warn": "yellow", "fail": "red"}.get(result.status, "white")
        table.add_row(name, f"[{style}]{result.status}[/{style}]", result.message)
        if result.details:
            table.add_row("", "", f"-> {result.details}")
    console.print(table)
    if validator.failed:
        raise typer.Exit(EXIT_INPUT_ERROR)


@app.command()
def runs(
    kind: Optional[str] = typer.Option(None, help="align|simulate|demo"),
    limit: int = typer.Option(10, help="Number of runs to show"),
) -> None:
    """List recent runs from the run registry."""
    records = list_runs(kind, limit)
    if not records:
        console.print("[yellow]No runs recorded[/yellow]")
        return
    table = Table(title="Runs")
    table.add_column("Run id", style="cyan")
    table.add_column("Kind")
    table.add_column("Input")
    table.add_column("Output", style="dim")
    table.add_column("Created", style="dim")
    for r in records:
        table.add_row(r.id, r.kind, r.input, r.output, r.created_at or "")
    console.print(table)


@app.command()
def keys() -> None:
    """List the keys accepted by --set and config files."""
    table = Table(show_header=True, header_style="bold")
    table.add_column("Key")
    table.add_column("Section")
    for key, section in FLAT_KEYS.items():
        table.add_row(key, section)
    console.print(table)


if __name__ == "__main__":
    app()
