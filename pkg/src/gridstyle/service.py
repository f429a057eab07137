"""FastAPI service wrapping the stylization pipeline.

All request/response bodies are pydantic models. Configuration problems
map to HTTP 400 and data problems (bad frames, masks, weight files) to
HTTP 422, which the CLI client translates into its exit codes.
"""

import os
from typing import List, Optional, Tuple

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .errors import ConfigError, DataError, GridStyleError
from .pipeline import (STAGES, PipelineConfig, benchmark, evaluate_metrics,
                       run_pipeline)

app = FastAPI(title="gridstyle", version="0.1.0",
              description="Localized photorealistic video stylization "
                          "via affine bilateral grids.")


class StylizeRequest(BaseModel):
    content_dir: str
    mask_dir: str
    style_fg: str
    style_bg: str
    out_dir: str
    weights: Optional[str] = None
    flow_dir: Optional[str] = None
    grid_rate: int = Field(default=1, ge=1)
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    lowres_size: int = 256
    transition: Optional[List[Tuple[int, float]]] = None
    style_fg2: Optional[str] = None
    style_bg2: Optional[str] = None
    seed: int = 42
    dump_grids: bool = False

    def to_config(self):
        return PipelineConfig(
            content_dir=self.content_dir,
            mask_dir=self.mask_dir,
            style_fg_path=self.style_fg,
            style_bg_path=self.style_bg,
            out_dir=self.out_dir,
            weights_path=self.weights,
            flow_dir=self.flow_dir,
            grid_rate=self.grid_rate,
            alpha=self.alpha,
            lowres_size=self.lowres_size,
            transition_schedule=(
                [tuple(t) for t in self.transition]
                if self.transition is not None else None),
            style_fg2_path=self.style_fg2,
            style_bg2_path=self.style_bg2,
            seed=self.seed,
            dump_grids=self.dump_grids,
        )


class StylizeResponse(BaseModel):
    frames: int
    keyframes: int
    out_dir: str
    stage_ms: dict


class BenchmarkRequest(StylizeRequest):
    resolutions: List[int]


class BenchmarkRow(BaseModel):
    resolution: int
    stage: str
    mean_ms: float
    std_ms: float
    n: int


class BenchmarkResponse(BaseModel):
    rows: List[BenchmarkRow]
    csv_path: str


class MetricsResponse(BaseModel):
    report: dict


@app.exception_handler(GridStyleError)
def _grid_error(request, exc):
    kind = "config" if isinstance(exc, ConfigError) else "data"
    status = 400 if isinstance(exc, ConfigError) else 422
    return JSONResponse(status_code=status,
                        content={"error": kind, "detail": str(exc)})


@app.get("/health")
def health():
    return {"status": "ok"}


def _stage_means(results):
    means = {}
    for stage in STAGES:
        vals = [res.timings[stage] for res in results if stage in res.timings]
        if vals:
            means[stage] = float(np.mean(vals))
    return means


@app.post("/stylize", response_model=StylizeResponse)
def stylize(req: StylizeRequest):
    results = run_pipeline(req.to_config())
    return StylizeResponse(
        frames=len(results),
        keyframes=sum(1 for res in results if res.is_keyframe),
        out_dir=req.out_dir,
        stage_ms=_stage_means(results),
    )


@app.post("/benchmark", response_model=BenchmarkResponse)
def run_benchmark(req: BenchmarkRequest):
    if not req.resolutions:
        raise ConfigError("benchmark needs at least one resolution")
    rows = benchmark(req.to_config(), req.resolutions)
    return BenchmarkResponse(
        rows=[BenchmarkRow(**row) for row in rows],
        csv_path=os.path.join(req.out_dir, "benchmark.csv"),
    )


@app.post("/metrics", response_model=MetricsResponse)
def metrics(req: StylizeRequest):
    if req.flow_dir is None:
        raise ConfigError("metrics evaluation requires flow_dir")
    return MetricsResponse(report=evaluate_metrics(req.to_config()))
