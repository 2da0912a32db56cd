from __future__ import annotations

import pytest
from fastapi.testclient import TestClient
from gyroburst.api import app


@pytest.fixture(autouse=True)
def run_db(tmp_path, monkeypatch):
    monkeypatch.setenv("GYROBURST_DB", str(tmp_path / "runs.sqlite3"))


def test_health():
    client = TestClient(app)
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json().get("status") == "ok"


def test_simulate_endpoint(tmp_path):
    client = TestClient(app)
    out = tmp_path / "burst"
    r = client.post("/simulate", json={"output_dir": str(out), "preset": "static", "frames": 2,
                                       "width": 64, "height": 64})
    assert r.status_code == 200
    data = r.json()
    assert "run_id" in data and isinstance(data["run_id"], str)
    assert (out / "timing.json").exists()


def test_simulate_validates_request(tmp_path):
    client = TestClient(app)
    r = client.post("/simulate", json={"output_dir": str(tmp_path), "preset": "spin"})
    assert r.status_code == 422
    r = client.post("/simulate", json={"output_dir": str(tmp_path), "frames": 0})
    assert r.status_code == 422


def test_align_bad_input_is_422(tmp_path):
    client = TestClient(app)
    r = client.post("/align", json={"burst_dir": str(tmp_path / "missing"), "output_dir": str(tmp_path / "out")})
    assert r.status_code == 422
    r = client.post("/align", json={"burst_dir": str(tmp_path), "output_dir": str(tmp_path / "out"),
                                    "overrides": {"tile": 12}})
    assert r.status_code == 422


@pytest.mark.slow
def test_align_endpoint(tmp_path):
    client = TestClient(app)
    burst = tmp_path / "burst"
    client.post("/simulate", json={"output_dir": str(burst), "frames": 4, "width": 128, "height": 128})
    r = client.post("/align", json={"burst_dir": str(burst), "output_dir": str(tmp_path / "out"),
                                    "overrides": {"tile": 32}})
    assert r.status_code == 200
    data = r.json()
    assert data["n_frames"] == 4
    assert data["merged_frames"] == data["n_valid_alternatives"] + 1
    assert "psnr_gain" in data["metrics"]
