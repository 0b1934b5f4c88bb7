# File: api.py
# Version: 1.1 (HTTP surface over the planner)

import asyncio
import os
from datetime import datetime
from typing import Any, Dict, Literal, Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

import scenarios
import settings
from artifacts import stats_document, timing_document
from cli import build_prior, run_plan, task_extra
from errors import PlannerError
from world_map import Scenario

# =====================================================================================
# API SETUP
# =====================================================================================

app = FastAPI(title="Aerial Manipulator Planner API - v1.1")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

MODEL_PATH = os.getenv("AM_PLANNER_MODEL")
DATASET_PATH = os.getenv("AM_PLANNER_DATASET")


@app.on_event("startup")
async def startup_event():
    settings.log("API", f">>> PLANNER API STARTED ({len(scenarios.list_presets())} presets, "
                        f"prior: {MODEL_PATH or DATASET_PATH or 'expert'}) <<<")


# =====================================================================================
# SCHEMAS
# =====================================================================================

class PlanRequest(BaseModel):
    scenario: Optional[Scenario] = None
    preset: Optional[str] = None
    mode: Literal["basic", "two-stage"] = "basic"
    seed: Optional[int] = None


class PlanResponse(BaseModel):
    stats: Dict[str, Any]
    timing: Dict[str, Any]


# =====================================================================================
# ENDPOINTS
# =====================================================================================

@app.get("/health")
async def health():
    return {"status": "ok", "ts": datetime.now().isoformat()}


@app.get("/presets")
async def presets():
    return {"presets": scenarios.list_presets()}


def resolve_scenario(req: PlanRequest) -> Scenario:
    if req.scenario is not None:
        scenario = req.scenario
    elif req.preset:
        if req.preset not in scenarios.list_presets():
            raise HTTPException(404, f"unknown preset '{req.preset}'")
        scenario = scenarios.load_preset(req.preset)
    else:
        raise HTTPException(422, "either 'scenario' or 'preset' is required")
    if req.seed is not None:
        scenario = scenario.model_copy(update={"seed": req.seed})
    return scenario


@app.post("/plan", response_model=PlanResponse)
async def plan(req: PlanRequest):
    scenario = resolve_scenario(req)
    guide_prior = build_prior(MODEL_PATH, DATASET_PATH) if req.mode == "two-stage" else None
    try:
        result = await asyncio.to_thread(run_plan, scenario, req.mode, guide_prior)
    except PlannerError as e:
        settings.log("API", f"⚠️ {scenario.name}: {type(e).__name__} in {e.stage}: {e}")
        status = 422 if e.exit_code == 2 else 500
        raise HTTPException(status, {"error": type(e).__name__, "stage": e.stage, "message": str(e)})
    settings.log("API", f"{scenario.name}: cost {result.cost:.4g}, {result.iterations} iterations")
    return PlanResponse(stats=stats_document(result, scenario, req.mode, scenario.seed,
                                             task_extra(result, scenario)),
                        timing=timing_document(result))


# The default `cli.py plan` output directory is browsable (SVG plots, CSV, JSON).
RUNS_DIR = os.getenv("AM_PLANNER_RUNS", "out")
if os.path.isdir(RUNS_DIR):
    app.mount("/runs", StaticFiles(directory=RUNS_DIR, html=True), name="runs")


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=int(os.getenv("PORT", "8000")))
