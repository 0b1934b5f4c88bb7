# File: cli.py
# Version: 1.3 (plan / demo-gen / train-prior / bench / plot / presets)

import argparse
import asyncio
import json
import os
import shutil
import sys
import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

import prior
import scenarios
import settings
from artifacts import plot_run, write_json, write_run, write_scenario, write_text
from corridor import utilization_rate
from errors import PlannerError
from solver import PlanResult, plan_basic
from world_map import Scenario

SUITES = ("sfc-ablation", "il-ablation", "narrow-gate", "tilted-hole", "random-cubes", "ee-accuracy")
COLLISION_MODELS = ("varying-ellipsoid", "fixed-ellipsoid")


# =====================================================================================
# HELPERS
# =====================================================================================

def build_prior(model_path: Optional[str] = None, dataset_path: Optional[str] = None) -> prior.GuidePrior:
    model = prior.load_model(model_path) if model_path else None
    dataset = prior.load_dataset(dataset_path) if dataset_path else None
    return prior.GuidePrior(model=model, dataset=dataset)


def run_plan(scenario: Scenario, mode: str, guide_prior: prior.GuidePrior = None) -> PlanResult:
    if mode == "two-stage":
        return prior.plan_two_stage(scenario, guide_prior)
    return plan_basic(scenario)


def task_extra(plan: PlanResult, scenario: Scenario) -> Dict[str, Any]:
    if scenario.task_index is None:
        return {}
    return scenarios.task_report(plan, scenario)


# =====================================================================================
# COMMANDS
# =====================================================================================

def cmd_plan(args) -> int:
    scenario = scenarios.load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.model_copy(update={"seed": args.seed})
    guide_prior = build_prior(args.model, args.dataset) if args.mode == "two-stage" else None
    plan = run_plan(scenario, args.mode, guide_prior)
    out = write_run(plan, scenario, args.out, args.mode, scenario.seed, task_extra(plan, scenario))
    settings.log("PLAN", f"artifacts in {args.out}")
    if args.plot:
        out.plots = plot_run(args.out)
    return 0


def cmd_demo_gen(args) -> int:
    records, stats = prior.generate_demos(args.n, args.seed, args.skill, args.threads or settings.THREADS)
    prior.save_dataset(records, args.out)
    rms = [r.meta["fit_rms"] for r in records]
    settings.log("PRIOR", f"{stats['accepted']} demonstrations written to {args.out} "
                          f"({stats['rejected']} rejected, max fit RMS {max(rms):.4f} m)")
    return 0


def cmd_train_prior(args) -> int:
    dataset = prior.load_dataset(args.dataset)
    model = prior.DiffusionModel(seed=args.seed)
    model, losses = prior.ddpm_train(dataset, model, args.epochs, args.seed)
    prior.save_model(model, args.out)
    write_json(os.path.splitext(args.out)[0] + ".loss.json", {"loss": losses})
    settings.log("PRIOR", f"{model.n_params()} parameters, final loss {losses[-1]:.5f}, saved to {args.out}")
    return 0


def cmd_plot(args) -> int:
    for path in plot_run(args.run_dir):
        settings.log("PLOT", path)
    return 0


def cmd_presets(args) -> int:
    names = scenarios.list_presets()
    if args.write:
        os.makedirs(args.write, exist_ok=True)
        for name in names:
            shutil.copyfile(scenarios.preset_path(name), os.path.join(args.write, f"{name}.json"))
        for variant in ("delta", "telescopic", "arc_1dof", "planar_2dof"):
            write_scenario(scenarios.flat_grasp_scene(variant), os.path.join(args.write, f"flat-grasp-{variant}.json"))
        settings.log("PRESETS", f"written to {args.write}")
        return 0
    for name in names:
        sc = scenarios.load_preset(name)
        print(f"{name:10s} {len(sc.waypoints)} waypoint(s), {len(sc.motions)} motion constraint(s), "
              f"{len(sc.obstacles)} obstacle(s)")
    return 0


# =====================================================================================
# BENCH
# =====================================================================================

class BenchReport(BaseModel):
    suite: str
    seed: int
    rows: List[Dict[str, Any]]
    summary: List[Dict[str, Any]]


def _collision_job(scene: Scenario, **labels):
    def job():
        plan = plan_basic(scene)
        report = scenarios.collision_report(plan, scene)
        return {**report, "cost": plan.cost, "iterations": plan.iterations}
    return labels, job


def _sfc_job(active: bool, seed: int):
    def job():
        scene = scenarios.inclined_scene("grasp", 40.0, (1.8, 1.0), name=f"sfc-ablation-{'on' if active else 'off'}")
        cfg = scene.corridor.model_copy(update={"active": active})
        scene = scene.model_copy(update={"corridor": cfg})
        plan = plan_basic(scene)
        target = scene.waypoints[scene.task_index].position
        return {"utilization": utilization_rate(plan.corridor, scene, target, 0.5, seed=seed),
                "ee_error": plan.waypoint_errors[scene.task_index]["position_error"],
                "success": bool(plan.waypoint_errors[scene.task_index]["position_error"] < 0.05),
                "cost": plan.cost, "iterations": plan.iterations}
    return {"active": active}, job


IL_METHODS = {
    "baseline": dict(k_guide=0, relax=True),
    "two-point-no-relax": dict(k_guide=2, relax=False),
    "two-point-relax": dict(k_guide=2, relax=True),
    "four-point-relax": dict(k_guide=4, relax=True),
    "six-point-relax": dict(k_guide=6, relax=True),
}


def _il_job(roll: float, r_range, cell: str, trial: int, method: str, seed: int, guide_prior):
    def job():
        rng = np.random.default_rng([seed, int(roll), int(10 * r_range[0]), trial])
        start = scenarios.sample_start(rng, r_range, behind=True)
        scene = scenarios.inclined_scene("strike", roll, start, name=f"il-{cell}-{trial}", seed=seed + trial)
        opts = IL_METHODS[method]
        if opts["k_guide"] == 0:
            plan = plan_basic(scene)
        else:
            plan = prior.plan_two_stage(scene, guide_prior, relax=opts["relax"], k_guide=opts["k_guide"])
        report = scenarios.task_report(plan, scene)
        return {"success": report["task_success"],
                "ee_error": report["ee_error"], "attitude_error_deg": report["attitude_error_deg"],
                "cost": plan.cost, "jerk": plan.breakdown.smooth, "iterations": plan.iterations}
    return {"cell": cell, "method": method, "trial": trial}, job


def _ee_job(variant: str):
    def job():
        scene = scenarios.flat_grasp_scene(variant)
        plan = plan_basic(scene)
        d = scenarios.ee_min_distance(plan, scene)
        return {"min_distance": d, "success": bool(d < 0.01),
                "cost": plan.cost, "iterations": plan.iterations}
    return {"variant": variant}, job


Job = Tuple[Dict[str, Any], Callable[[], Dict[str, Any]]]


def suite_jobs(suite: str, seed: int, trials: int, guide_prior=None) -> List[Job]:
    jobs = []
    if suite == "narrow-gate":
        for gap in scenarios.GATE_GAPS:
            for model in COLLISION_MODELS:
                jobs.append(_collision_job(scenarios.narrow_gate_scene(gap, model), gap=gap, collision_model=model))
    elif suite == "tilted-hole":
        for angle in scenarios.HOLE_ANGLES:
            for depth in scenarios.HOLE_DEPTHS:
                for model in COLLISION_MODELS:
                    jobs.append(_collision_job(scenarios.tilted_hole_scene(angle, depth, model),
                                               angle=angle, ee_depth=depth, collision_model=model))
    elif suite == "random-cubes":
        for k in range(10):
            for model in COLLISION_MODELS:
                jobs.append(_collision_job(scenarios.random_cubes_scene(seed + k, collision_model=model),
                                           map_seed=seed + k, collision_model=model))
    elif suite == "sfc-ablation":
        jobs = [_sfc_job(True, seed), _sfc_job(False, seed)]
    elif suite == "il-ablation":
        cells = [(roll, (1.5, 3.0), f"{roll:g}deg") for roll in scenarios.IL_ROLLS] + [(40.0, (3.0, 4.0), "40deg-ood")]
        for roll, r_range, cell in cells:
            for method in IL_METHODS:
                for t in range(trials):
                    jobs.append(_il_job(roll, r_range, cell, t, method, seed, guide_prior))
    elif suite == "ee-accuracy":
        jobs = [_ee_job(v) for v in ("delta", "telescopic", "arc_1dof", "planar_2dof")]
    else:
        raise ValueError(f"unknown suite {suite}")
    return jobs


async def run_jobs(jobs: List[Job], threads: int) -> List[Dict[str, Any]]:
    """Runs jobs in worker threads; rows (labels + metrics + wall_time) come back in job order."""
    sem = asyncio.Semaphore(max(1, threads))

    def timed(job):
        labels, fn = job
        t0 = time.perf_counter()
        try:
            row = {**labels, **fn()}
        except PlannerError as exc:
            row = {**labels, "success": False, "error": type(exc).__name__, "stage": exc.stage}
        row["wall_time"] = time.perf_counter() - t0
        return row

    async def run(i, job):
        async with sem:
            row = await asyncio.to_thread(timed, job)
            settings.log("BENCH", f"job {i}: success={row.get('success')}")
            return row

    return list(await asyncio.gather(*(run(i, j) for i, j in enumerate(jobs))))


SUITE_GROUPS = {
    "narrow-gate": ["collision_model"],
    "tilted-hole": ["collision_model"],
    "random-cubes": ["collision_model"],
    "sfc-ablation": ["active"],
    "il-ablation": ["cell", "method"],
    "ee-accuracy": ["variant"],
}


def summarize(suite: str, rows: List[Dict[str, Any]]) -> pd.DataFrame:
    df = pd.DataFrame(rows)
    keys = [k for k in SUITE_GROUPS[suite] if k in df.columns]
    agg = {"success": "mean"}
    for col in ("cost", "iterations", "ee_error", "min_distance", "utilization", "jerk"):
        if col in df.columns:
            agg[col] = "mean"
    out = df.groupby(keys, sort=False).agg(agg).reset_index()
    out["success"] = 100.0 * out["success"]
    return out.rename(columns={"success": "success_rate"})


def cmd_bench(args) -> int:
    guide_prior = build_prior(args.model, args.dataset)
    jobs = suite_jobs(args.suite, args.seed, args.trials, guide_prior)
    settings.log("BENCH", f"{args.suite}: {len(jobs)} run(s) on {args.threads or settings.THREADS} worker(s)")
    rows = asyncio.run(run_jobs(jobs, args.threads or settings.THREADS))
    timings = [row.pop("wall_time") for row in rows]
    table = summarize(args.suite, rows)
    report = BenchReport(suite=args.suite, seed=args.seed, rows=rows,
                         summary=json.loads(table.to_json(orient="records")))
    os.makedirs(args.out, exist_ok=True)
    write_json(os.path.join(args.out, f"{args.suite}.json"), json.loads(report.model_dump_json()))
    write_json(os.path.join(args.out, f"{args.suite}.timing.json"), {"wall_time": timings})
    text = table.to_string(index=False, float_format=lambda x: f"{x:.4g}")
    write_text(os.path.join(args.out, f"{args.suite}.txt"), text + "\n")
    print(text)
    return 0


# =====================================================================================
# ENTRY POINT
# =====================================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="am-planner", description="Whole-body aerial manipulator planner")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one scenario")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=("basic", "two-stage"), default="basic")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--model", default=None, help="trained prior (two-stage)")
    p.add_argument("--dataset", default=None, help="demonstrations for nearest-demo fallback (two-stage)")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("demo-gen", help="generate demonstrations")
    p.add_argument("--skill", choices=("strike", "grasp"), default="strike")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="demos.jsonl")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_demo_gen)

    p = sub.add_parser("train-prior", help="train the diffusion prior")
    p.add_argument("dataset")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_train_prior)

    p = sub.add_parser("bench", help="run a benchmark suite")
    p.add_argument("--suite", choices=SUITES, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--out", default="bench")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--dataset", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render SVG plots for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("presets", help="list or write the shipped scenarios")
    p.add_argument("--write", default=None, metavar="DIR")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"❌ [INPUT] {exc}", file=sys.stderr)
        return 1
    except (ValidationError, json.JSONDecodeError, ValueError) as exc:
        print(f"❌ [INPUT] {exc}", file=sys.stderr)
        return 1
    except PlannerError as exc:
        print(f"❌ [{exc.stage.upper()}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
