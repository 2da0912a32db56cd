from __future__ import annotations
import subprocess
import sys

import pytest
from typer.testing import CliRunner

from gyroburst.cli import EXIT_INPUT_ERROR, EXIT_NO_VALID_FRAMES, app
from gyroburst.core.storage import list_runs

runner = CliRunner()


@pytest.fixture(autouse=True)
def run_db(tmp_path, monkeypatch):
    monkeypatch.setenv("GYROBURST_DB", str(tmp_path / "runs.sqlite3"))


def test_cli_help():
    out = subprocess.check_output([sys.executable, "-m", "gyroburst.cli", "--help"])
    assert b"Gyro-aided burst alignment" in out


def test_simulate_writes_burst_and_registers_run(tmp_path):
    burst = tmp_path / "burst"
    result = runner.invoke(app, ["simulate", str(burst), "--preset", "static", "--frames", "3",
                                 "--width", "64", "--height", "64"])
    assert result.exit_code == 0, result.output
    assert (burst / "gyro.csv").exists()
    assert (burst / "frame_0002.png").exists()
    assert "[run_id]" in result.output
    runs = list_runs("simulate")
    assert len(runs) == 1 and runs[0].output == str(burst)


def test_simulate_rejects_unknown_preset(tmp_path):
    result = runner.invoke(app, ["simulate", str(tmp_path / "b"), "--preset", "spin"])
    assert result.exit_code == EXIT_INPUT_ERROR


def test_align_missing_directory(tmp_path):
    result = runner.invoke(app, ["align", str(tmp_path / "nowhere"), "-o", str(tmp_path / "out")])
    assert result.exit_code == EXIT_INPUT_ERROR
    assert "Error" in result.output


def test_align_rejects_unknown_set_key(tmp_path):
    burst = tmp_path / "burst"
    runner.invoke(app, ["simulate", str(burst), "--preset", "static", "--frames", "2",
                        "--width", "64", "--height", "64"])
    result = runner.invoke(app, ["align", str(burst), "-o", str(tmp_path / "out"), "--set", "warp=9"])
    assert result.exit_code == EXIT_INPUT_ERROR


@pytest.mark.slow
def test_simulate_then_align(tmp_path):
    burst = tmp_path / "burst"
    out = tmp_path / "out"
    sim = runner.invoke(app, ["simulate", str(burst), "--frames", "4", "--width", "128", "--height", "128"])
    assert sim.exit_code == 0, sim.output
    result = runner.invoke(app, ["align", str(burst), "-o", str(out), "--set", "tile=32"])
    assert result.exit_code in (0, EXIT_NO_VALID_FRAMES), result.output
    assert (out / "merged.png").exists()
    assert (out / "report.json").exists()
    assert "Frames" in result.output
    assert [r.kind for r in list_runs()] == ["align", "simulate"]


def test_keys_lists_flat_keys():
    result = runner.invoke(app, ["keys"])
    assert result.exit_code == 0
    assert "steady_error_threshold" in result.output
    assert "rk4_step_ns" in result.output


def test_runs_on_empty_registry():
    result = runner.invoke(app, ["runs"])
    assert result.exit_code == 0
    assert "No runs recorded" in result.output


def test_doctor_checks_burst(tmp_path):
    burst = tmp_path / "burst"
    runner.invoke(app, ["simulate", str(burst), "--preset", "static", "--frames", "2",
                        "--width", "64", "--height", "64"])
    result = runner.invoke(app, ["doctor", str(burst)])
    assert result.exit_code == 0, result.output
    assert "Metadata" in result.output

    (burst / "gyro.csv").write_text("t_ns,omega_x,omega_y,omega_z\n0,0,0,0\n")
    result = runner.invoke(app, ["doctor", str(burst)])
    assert result.exit_code == EXIT_INPUT_ERROR
