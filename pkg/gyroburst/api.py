from __future__ import annotations

from typing import Any, Dict, Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .burst.burst_io import write_burst
from .burst.pipeline import PipelineConfig, run_pipeline
from .burst.simulation import simulate_burst
from .core.data_formats import DataImporter
from .core.errors import BurstError
from .core.storage import RunRecord, save_run


app = FastAPI(title="gyroburst API", version=__version__)


class SimulateRequest(BaseModel):
    output_dir: str
    preset: Literal["offset", "inplane", "xaxis", "static"] = "offset"
    frames: int = Field(16, ge=1)
    seed: int = 0
    width: int = Field(256, ge=32)
    height: int = Field(256, ge=32)


class AlignRequest(BaseModel):
    burst_dir: str
    output_dir: str
    overrides: Dict[str, Any] = Field(default_factory=dict)


def _record(kind: str, input: str, output: str, meta: Optional[dict] = None) -> str:
    record = RunRecord.new(kind, input, output, meta)
    save_run(record)
    return record.id


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/simulate")
def api_simulate(req: SimulateRequest) -> dict:
    try:
        burst = simulate_burst(req.preset, req.frames, req.seed, width=req.width, height=req.height)
        write_burst(burst.to_burst(), req.output_dir)
    except BurstError as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    run_id = _record("simulate", req.preset, req.output_dir, {"frames": req.frames, "seed": req.seed})
    return {"run_id": run_id, "burst_dir": req.output_dir}


@app.post("/align")
def api_align(req: AlignRequest) -> dict:
    try:
        cfg = PipelineConfig().with_overrides(req.overrides)
        _, report_path = run_pipeline(req.burst_dir, cfg, req.output_dir)
    except (BurstError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e)) from e
    report = DataImporter.from_json(report_path)
    summary = {
        "n_frames": report["n_frames"],
        "n_valid_alternatives": report["n_valid_alternatives"],
        "merged_frames": report["merged_frames"],
        "noise_sigma": report["noise_sigma"],
        "metrics": report.get("metrics", {}),
        "report": str(report_path),
    }
    run_id = _record("align", req.burst_dir, str(report_path), {"merged_frames": report["merged_frames"]})
    return {"run_id": run_id, **summary}


def run(host: str = "0.0.0.0", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run("gyroburst.api:app", host=host, port=port, reload=False)
