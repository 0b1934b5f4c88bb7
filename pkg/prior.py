# File: prior.py
# Version: 1.3 (demonstrations + desk-scale diffusion prior + two-stage guided plan)
"""
Guide-point prior for aggressive-attitude tasks on inclined surfaces.

A demonstration maps an observation (start position relative to the surface, in the
surface-azimuth frame, plus the inclination) to 15 polynomial coefficients describing
the quadrotor's motion around the task instant: for each axis a quintic without constant
term over tau in [-1, 1] s, relative to the body position at the task.

The diffusion prior follows the standard DDPM recursion. The denoiser network outputs
the clean normalized action a0_hat, not the noise. `DiffusionModel.eps_torch` converts
it to a noise estimate with eps_hat = (a_k - sqrt(alpha_bar_k) a0_hat) / sqrt(1 - alpha_bar_k),
so training minimizes ||eps - eps_hat||^2 and the reverse step consumes eps_hat exactly
as in the noise-predicting form.
"""
import asyncio
import json
from dataclasses import replace
from math import ceil
from time import perf_counter
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ValidationError, field_validator, model_validator
from torch import nn

import settings
import spline
from artifacts import write_json, write_text
from core_model import AmParams
from corridor import build_sfc
from costs import WaypointConstraint
from errors import InsufficientYield, NonFiniteLoss, PlannerError
from scenarios import inclined_scene, sample_start, task_report
from solver import PlanResult, finish_plan, plan_basic, reference_path, solve_stage, tighten
from world_map import Scenario, clearance_ok, rasterize

ACTION_DIM = 15
OBS_DIM = 3
POWERS = np.arange(1, 6)
COST_LIMIT = 1e5
WINDOW = 1.0
FIT_SAMPLES = 15
FIT_RMS_LIMIT = 0.02

GUIDE_TIMES = {
    0: (),
    2: (-0.5, 0.5),
    4: (-0.75, -0.35, 0.35, 0.75),
    6: (-0.85, -0.55, -0.25, 0.25, 0.55, 0.85),
}

TANGENT_SPEED = 1.0
MAX_LATERAL_ACC = 1.5     # in units of g


# =====================================================================================
# SCHEMAS
# =====================================================================================

class Observation(BaseModel):
    p_rel_xy: Tuple[float, float]
    theta_inc: float

    @field_validator("theta_inc")
    @classmethod
    def check_theta(cls, v):
        if not 0.0 <= v < np.pi / 2:
            raise ValueError("theta_inc must lie in [0, pi/2)")
        return v

    def as_array(self) -> np.ndarray:
        return np.array([self.p_rel_xy[0], self.p_rel_xy[1], self.theta_inc])


class ActionCoeffs(BaseModel):
    coeffs: List[float]

    @field_validator("coeffs")
    @classmethod
    def check_coeffs(cls, v):
        if len(v) != ACTION_DIM or not np.all(np.isfinite(v)):
            raise ValueError(f"expected {ACTION_DIM} finite coefficients")
        return [float(x) for x in v]

    @classmethod
    def from_array(cls, a) -> "ActionCoeffs":
        return cls(coeffs=np.asarray(a, dtype=float).ravel().tolist())

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs)

    @property
    def matrix(self) -> np.ndarray:
        """(3, 5): rows are axes, columns powers 1..5."""
        return self.as_array().reshape(3, 5)

    def evaluate(self, tau) -> np.ndarray:
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return (tau[:, None] ** POWERS) @ self.matrix.T


class DemoRecord(BaseModel):
    observation: Observation
    coeffs: List[float]
    meta: Dict[str, Union[float, int, str]] = {}

    @field_validator("coeffs")
    @classmethod
    def check_coeffs(cls, v):
        return ActionCoeffs(coeffs=v).coeffs

    @property
    def action(self) -> ActionCoeffs:
        return ActionCoeffs(coeffs=self.coeffs)


class DiffusionConfig(BaseModel):
    K: int = 50
    beta_start: float = 1e-4
    beta_end: float = 0.02
    hidden: int = 32
    emb_dim: int = 16
    epochs: int = 300
    lr: float = 1e-2
    batch_size: int = 64

    @model_validator(mode="after")
    def check_invariants(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ValueError("schedule needs 0 < beta_start <= beta_end < 1")
        if self.emb_dim % 2:
            raise ValueError("emb_dim must be even")
        return self

    @classmethod
    def from_config(cls) -> "DiffusionConfig":
        return cls(**settings.section("diffusion"))


# =====================================================================================
# TASK GEOMETRY
# =====================================================================================

def _rot_z(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def task_frame(scenario: Scenario):
    """(task constraint, unit normal, azimuth, inclination) of the scenario's surface task."""
    if scenario.task_index is None:
        raise ValueError("scenario has no task_index")
    task = scenario.waypoints[scenario.task_index]
    if task.surface is None:
        raise ValueError("task constraint has no attached surface")
    n = np.asarray(task.surface.normal, dtype=float)
    psi = float(np.arctan2(n[1], n[0])) if np.hypot(n[0], n[1]) > 1e-9 else 0.0
    theta = float(np.arccos(np.clip(n[2], -1.0, 1.0)))
    return task, n, psi, theta


def observe(scenario: Scenario) -> Observation:
    task, _, psi, theta = task_frame(scenario)
    rel = np.asarray(scenario.start.p_b) - np.asarray(task.surface.point)
    local = _rot_z(psi).T @ rel
    return Observation(p_rel_xy=(float(local[0]), float(local[1])), theta_inc=theta)


def expert_guide_coeffs(obs: Observation, params: AmParams) -> ActionCoeffs:
    """Arc through the task point: tangential sweep from the start's side, centripetal push along the surface azimuth."""
    side = 1.0 if obs.p_rel_xy[1] >= 0.0 else -1.0
    acc = min(params.g * np.tan(obs.theta_inc), MAX_LATERAL_ACC * params.g)
    m = np.zeros((3, 5))
    m[0, 1] = 0.5 * acc
    m[1, 0] = -side * TANGENT_SPEED
    return ActionCoeffs.from_array(m)


def fit_action(traj: spline.Trajectory6, t_star: float, azimuth: float = 0.0,
               window: float = WINDOW, n: int = FIT_SAMPLES) -> Tuple[ActionCoeffs, float]:
    """Least-squares zero-constant quintic per axis over the window; returns coefficients and RMS residual."""
    tau = np.linspace(-1.0, 1.0, n)
    t = np.clip(t_star + window * tau, 0.0, traj.total_duration)
    p0 = spline.eval(traj, min(t_star, traj.total_duration), 0)[:3]
    rel = (spline.sample(traj, t, 0)[:, :3] - p0) @ _rot_z(azimuth)
    A = tau[:, None] ** POWERS
    coef, *_ = np.linalg.lstsq(A, rel, rcond=None)
    resid = A @ coef - rel
    rms = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))
    return ActionCoeffs.from_array(coef.T), rms


def sample_guide_points(coeffs: ActionCoeffs, task_point, k_guide: int,
                        azimuth: float = 0.0) -> List[WaypointConstraint]:
    if k_guide not in GUIDE_TIMES:
        raise ValueError(f"k_guide must be one of {sorted(GUIDE_TIMES)}")
    times = GUIDE_TIMES[k_guide]
    if not times:
        return []
    offsets = coeffs.evaluate(times) @ _rot_z(azimuth).T
    base = np.asarray(task_point, dtype=float)
    return [WaypointConstraint(kind="quadrotor", position=tuple(float(x) for x in base + off),
                               guide=True, label=f"guide{tau:+.2f}")
            for tau, off in zip(times, offsets)]


# =====================================================================================
# DIFFUSION MODEL
# =====================================================================================

def linear_schedule(K: int, beta_start: float, beta_end: float) -> np.ndarray:
    return np.linspace(beta_start, beta_end, K) if K > 1 else np.array([beta_start])


def step_embedding(k: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-np.log(1000.0) * torch.arange(half, dtype=torch.float64) / half)
    ang = k.to(torch.float64)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)


class Denoiser(nn.Module):
    """Predicts the clean (normalized) action from (a_k, step embedding, observation)."""

    def __init__(self, hidden: int = 32, emb_dim: int = 16):
        super().__init__()
        self.emb_dim = emb_dim
        self.net = nn.Sequential(
            nn.Linear(ACTION_DIM + OBS_DIM + emb_dim, hidden), nn.SiLU(),
            nn.Linear(hidden, hidden), nn.SiLU(),
            nn.Linear(hidden, ACTION_DIM),
        )

    def forward(self, a_k: torch.Tensor, k: torch.Tensor, obs: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([a_k, step_embedding(k, self.emb_dim), obs], dim=1))


class DiffusionModel:
    def __init__(self, config: DiffusionConfig = None, seed: int = 0):
        self.config = config or DiffusionConfig.from_config()
        self.beta = linear_schedule(self.config.K, self.config.beta_start, self.config.beta_end)
        self.alpha = 1.0 - self.beta
        self.alpha_bar = np.cumprod(self.alpha)
        torch.manual_seed(seed)
        self.net = Denoiser(self.config.hidden, self.config.emb_dim).double()
        self.mu = np.zeros(ACTION_DIM)
        self.sd = np.ones(ACTION_DIM)

    @property
    def K(self) -> int:
        return self.config.K

    def n_params(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    def eps_torch(self, a_k: torch.Tensor, k: torch.Tensor, obs: torch.Tensor) -> torch.Tensor:
        ab = torch.as_tensor(self.alpha_bar, dtype=torch.float64)[k - 1][:, None]
        a0_hat = self.net(a_k, k, obs)
        return (a_k - torch.sqrt(ab) * a0_hat) / torch.sqrt(1.0 - ab)

    def predict_eps(self, a_k, k, obs) -> np.ndarray:
        a_k = np.atleast_2d(a_k)
        k = np.broadcast_to(np.atleast_1d(k), (len(a_k),))
        obs = np.broadcast_to(np.atleast_2d(obs), (len(a_k), OBS_DIM))
        with torch.no_grad():
            eps = self.eps_torch(torch.as_tensor(a_k, dtype=torch.float64),
                                 torch.as_tensor(np.asarray(k), dtype=torch.long),
                                 torch.as_tensor(np.asarray(obs), dtype=torch.float64))
        return eps.numpy()


def ddpm_forward(a0, k: int, eps, model: DiffusionModel) -> np.ndarray:
    if not 1 <= k <= model.K:
        raise ValueError(f"k must lie in [1, {model.K}]")
    ab = model.alpha_bar[k - 1]
    return np.sqrt(ab) * np.asarray(a0, dtype=float) + np.sqrt(1.0 - ab) * np.asarray(eps, dtype=float)


def reverse_step(model: DiffusionModel, a_k, k: int, eps_hat, z) -> np.ndarray:
    beta, alpha, ab = model.beta[k - 1], model.alpha[k - 1], model.alpha_bar[k - 1]
    mean = (np.asarray(a_k) - beta / np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(alpha)
    return mean + np.sqrt(beta) * np.asarray(z)


def ddpm_loss(model: DiffusionModel, a0, k, eps, obs, denoiser: Callable = None) -> float:
    """Mean over the batch of ||eps - f(a_k, k, o)||^2 (normalized action space)."""
    a0, eps = np.atleast_2d(a0), np.atleast_2d(eps)
    k = np.broadcast_to(np.atleast_1d(k), (len(a0),))
    ab = model.alpha_bar[k - 1][:, None]
    a_k = np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * eps
    f = denoiser or model.predict_eps
    return float(np.mean(np.sum((eps - f(a_k, k, obs)) ** 2, axis=1)))


def _normalizer(actions: np.ndarray):
    mu = actions.mean(axis=0)
    sd = actions.std(axis=0)
    return mu, np.where(sd < 1e-6, 1.0, sd)


def ddpm_train(dataset: Sequence[DemoRecord], model: DiffusionModel, epochs: int = None,
               seed: int = 0) -> Tuple[DiffusionModel, List[float]]:
    if not dataset:
        raise ValueError("dataset is empty")
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    actions = np.array([r.coeffs for r in dataset])
    obs = np.array([r.observation.as_array() for r in dataset])
    model.mu, model.sd = _normalizer(actions)
    a0_all = (actions - model.mu) / model.sd

    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    opt = torch.optim.Adam(model.net.parameters(), lr=cfg.lr)
    steps = max(1, ceil(len(dataset) / cfg.batch_size))
    losses = []
    model.net.train()
    for epoch in range(epochs):
        total = 0.0
        for _ in range(steps):
            idx = rng.integers(0, len(dataset), cfg.batch_size)
            k = rng.integers(1, model.K + 1, cfg.batch_size)
            eps = rng.standard_normal((cfg.batch_size, ACTION_DIM))
            ab = model.alpha_bar[k - 1][:, None]
            a_k = np.sqrt(ab) * a0_all[idx] + np.sqrt(1.0 - ab) * eps

            eps_t = torch.as_tensor(eps)
            pred = model.eps_torch(torch.as_tensor(a_k), torch.as_tensor(k, dtype=torch.long),
                                   torch.as_tensor(obs[idx]))
            loss = ((eps_t - pred) ** 2).sum(dim=1).mean()
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"loss became non-finite at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.item())
        losses.append(total / steps)
        if epoch % 50 == 0 or epoch == epochs - 1:
            settings.log("PRIOR", f"epoch {epoch}: loss {losses[-1]:.5f}")
    model.net.eval()
    return model, losses


def ddpm_sample(model: DiffusionModel, obs: Observation, seed: int = 0, denoiser: Callable = None,
                stochastic: bool = True) -> ActionCoeffs:
    """K reverse steps from standard Gaussian; no noise on the final step."""
    rng = np.random.default_rng(seed)
    o = obs.as_array()
    f = denoiser or model.predict_eps
    a = rng.standard_normal(ACTION_DIM)
    for k in range(model.K, 0, -1):
        eps_hat = np.asarray(f(a[None], np.array([k]), o[None])).reshape(ACTION_DIM)
        z = rng.standard_normal(ACTION_DIM) if stochastic and k > 1 else np.zeros(ACTION_DIM)
        a = reverse_step(model, a, k, eps_hat, z)
    return ActionCoeffs.from_array(model.mu + model.sd * a)


# =====================================================================================
# MODEL / DATASET FILES
# =====================================================================================

def model_to_dict(model: DiffusionModel) -> dict:
    params = [p.detach() for p in model.net.parameters()]
    return {
        "config": model.config.model_dump(),
        "beta": model.beta.tolist(),
        "alpha_bar": model.alpha_bar.tolist(),
        "mu": model.mu.tolist(),
        "sd": model.sd.tolist(),
        "shapes": [list(p.shape) for p in params],
        "params": torch.nn.utils.parameters_to_vector(params).tolist(),
    }


def model_from_dict(data: dict) -> DiffusionModel:
    model = DiffusionModel(DiffusionConfig(**data["config"]))
    shapes = [list(p.shape) for p in model.net.parameters()]
    if shapes != data["shapes"]:
        raise ValueError("layer shapes in the model file do not match the configured denoiser")
    vec = torch.tensor(data["params"], dtype=torch.float64)
    torch.nn.utils.vector_to_parameters(vec, model.net.parameters())
    model.mu = np.array(data["mu"], dtype=float)
    model.sd = np.array(data["sd"], dtype=float)
    model.net.eval()
    return model


def save_model(model: DiffusionModel, path: str):
    write_json(path, model_to_dict(model))


def load_model(path: str) -> DiffusionModel:
    with open(path, "r", encoding="utf-8") as f:
        return model_from_dict(json.load(f))


def save_dataset(records: Sequence[DemoRecord], path: str):
    write_text(path, "".join(r.model_dump_json() + "\n" for r in records))


def load_dataset(path: str) -> List[DemoRecord]:
    with open(path, "r", encoding="utf-8") as f:
        return [DemoRecord.model_validate_json(line) for line in f if line.strip()]


# =====================================================================================
# GUIDE PRIOR
# =====================================================================================

def nearest_demo(dataset: Sequence[DemoRecord], obs: Observation) -> DemoRecord:
    X = np.array([r.observation.as_array() for r in dataset])
    return dataset[int(np.argmin(np.linalg.norm(X - obs.as_array(), axis=1)))]


class GuidePrior:
    """Trained diffusion model, else nearest demonstration, else the expert arc."""

    def __init__(self, model: DiffusionModel = None, dataset: Sequence[DemoRecord] = None):
        self.model = model
        self.dataset = list(dataset) if dataset else []

    @property
    def source(self) -> str:
        if self.model is not None:
            return "diffusion"
        return "nearest-demo" if self.dataset else "expert"

    def coeffs(self, obs: Observation, params: AmParams, seed: int = 0) -> ActionCoeffs:
        if self.model is not None:
            return ddpm_sample(self.model, obs, seed)
        if self.dataset:
            return nearest_demo(self.dataset, obs).action
        return expert_guide_coeffs(obs, params)


# =====================================================================================
# TWO-STAGE PLAN
# =====================================================================================

def _usable_guides(guides, times, scenario: Scenario, grid, task_point):
    min_gap = 2.0 * scenario.resolution
    kept = []
    lo, hi = np.asarray(scenario.bounds_lo), np.asarray(scenario.bounds_hi)
    for g, tau in zip(guides, times):
        p = np.asarray(g.position)
        if (not grid.is_free(p) or not np.all((p >= lo) & (p <= hi))
                or not clearance_ok(scenario, p, scenario.params.r_e)
                or np.linalg.norm(p - task_point) < min_gap
                or any(np.linalg.norm(p - np.asarray(k.position)) < min_gap for k, _ in kept)):
            settings.log("PRIOR", f"⚠️ dropping {g.label} at {np.round(p, 3).tolist()}")
            continue
        kept.append((g, tau))
    return kept


def _with_constraints(scenario: Scenario, constraints, index_map: Dict[int, int]) -> Scenario:
    motions = []
    for m in scenario.motions:
        if m.segments is None:
            m = m.model_copy(update={"from_waypoint": index_map[m.from_waypoint],
                                     "to_waypoint": index_map[m.to_waypoint]})
        motions.append(m)
    return scenario.model_copy(update={"waypoints": list(constraints), "motions": motions,
                                       "task_index": index_map[scenario.task_index]})


def plan_two_stage(scenario: Scenario, prior: GuidePrior = None, relax: bool = True,
                   k_guide: int = None) -> PlanResult:
    """
    Stage 1 fixes prior guide points next to the task constraint and solves to the loose
    tolerance; stage 2 releases them (warm start, same corridor) and solves to the strict one.
    With relax=False the guided solve runs once at the strict tolerance and keeps the guides.
    """
    t0 = perf_counter()
    prior = prior or GuidePrior()
    k_guide = scenario.k_guide if k_guide is None else k_guide
    params = scenario.params
    task, _, psi, _ = task_frame(scenario)
    obs = observe(scenario)
    task_point = task.path_point(params)
    info = {"observation": obs.model_dump(), "prior": prior.source, "relax": relax}

    guides = []
    grid = rasterize(scenario)
    if k_guide:
        coeffs = prior.coeffs(obs, params, seed=scenario.seed)
        raw = sample_guide_points(coeffs, task_point, k_guide, psi)
        guides = _usable_guides(raw, GUIDE_TIMES[k_guide], scenario, grid, task_point)
    info["guides"] = [list(g.position) for g, _ in guides]
    info["k_guide"] = len(guides)

    if not guides:
        settings.log("PRIOR", "no guide points, single strict stage")
        plan = plan_basic(scenario)
        plan.task = info
        return plan

    ti = scenario.task_index
    before = [g for g, tau in guides if tau < 0]
    after = [g for g, tau in guides if tau > 0]
    wps = list(scenario.waypoints)
    staged = wps[:ti] + before + [task] + after + wps[ti + 1:]
    index_map = {old: (old if old < ti else old + len(before) + (len(after) if old > ti else 0))
                 for old in range(len(wps))}
    guided = _with_constraints(scenario, staged, index_map)
    settings.log("PRIOR", f"{len(guides)} guide point(s) from the {prior.source} prior")

    _, path, marks = reference_path(guided, staged, grid)
    corridor = build_sfc(path, marks, staged, grid, params, scenario.corridor)
    res1, prob1, st1 = solve_stage(guided, corridor, staged, loose=relax, name="guided")
    if not relax:
        stages = [st1]
        res1, prob1, _ = tighten(guided, corridor, staged, res1, prob1, stages)
        plan = finish_plan(guided, prob1, res1, stages, t0)
        plan.task = info
        return plan

    keep = [lam for lam, c in enumerate(staged) if not c.guide]
    released = [staged[lam] for lam in keep]
    corridor2 = replace(corridor, phi={new: corridor.phi[old] for new, old in enumerate(keep)})
    res2, prob2, st2 = solve_stage(scenario, corridor2, released, loose=False,
                                   warm=prob1.unpack(res1.x), name="released")
    stages = [st1, st2]
    res2, prob2, _ = tighten(scenario, corridor2, released, res2, prob2, stages)
    plan = finish_plan(scenario, prob2, res2, stages, t0)
    plan.task = info
    settings.log("PLAN", f"{scenario.name}: two-stage J={plan.cost:.4g}, {plan.iterations} it")
    return plan


# =====================================================================================
# DEMONSTRATIONS
# =====================================================================================

def accept_demo(cost: float, task_success: bool) -> bool:
    return bool(task_success and np.isfinite(cost) and cost <= COST_LIMIT)


def demo_scene(skill: str, index: int, seed: int) -> Scenario:
    rng = np.random.default_rng([seed, index])
    theta = rng.uniform(20.0, 60.0)
    start = sample_start(rng, (1.5, 3.0))
    return inclined_scene(skill, theta, start, name=f"demo-{skill}-{index}", seed=index)


def run_demo(skill: str, index: int, seed: int) -> Optional[DemoRecord]:
    """One expert-guided attempt; None when rejected."""
    try:
        scene = demo_scene(skill, index, seed)
        plan = plan_two_stage(scene, GuidePrior(), relax=True)
    except (PlannerError, ValidationError) as exc:
        settings.log("PRIOR", f"⚠️ attempt {index} failed: {exc}")
        return None
    report = task_report(plan, scene)
    if not accept_demo(plan.cost, report["task_success"]):
        return None
    _, _, psi, theta = task_frame(scene)
    t_star = plan.trajectory.junction_time(plan.corridor.phi[scene.task_index])
    action, rms = fit_action(plan.trajectory, t_star, psi)
    if rms > FIT_RMS_LIMIT:
        settings.log("PRIOR", f"⚠️ attempt {index} rejected: fit RMS {rms:.4f} m")
        return None
    return DemoRecord(observation=observe(scene), coeffs=action.coeffs,
                      meta={"skill": skill, "index": index, "theta_deg": float(np.degrees(theta)),
                            "cost": plan.cost, "fit_rms": rms})


async def generate_demos_async(n: int, seed: int, skill: str = "strike",
                               threads: int = None) -> Tuple[List[DemoRecord], Dict[str, int]]:
    """First n accepted attempts in index order; at most 10 n attempts."""
    if n < 1:
        raise ValueError("n must be at least 1")
    threads = max(1, threads or settings.THREADS)
    sem = asyncio.Semaphore(threads)

    async def attempt(i):
        async with sem:
            return await asyncio.to_thread(run_demo, skill, i, seed)

    limit = 10 * n
    records: List[DemoRecord] = []
    rejected = 0
    i = 0
    while len(records) < n and i < limit:
        batch = range(i, min(limit, i + threads))
        for rec in await asyncio.gather(*(attempt(j) for j in batch)):
            if len(records) >= n:
                break
            if rec is None:
                rejected += 1
            else:
                records.append(rec)
        i = batch.stop
    attempts = len(records) + rejected
    settings.log("PRIOR", f"{skill}: {len(records)} accepted, {rejected} rejected")
    if len(records) < n:
        raise InsufficientYield(f"only {len(records)} of {n} demonstrations accepted in {attempts} attempts")
    return records, {"accepted": len(records), "rejected": rejected, "attempts": attempts}


def generate_demos(n: int, seed: int, skill: str = "strike", threads: int = 1):
    return asyncio.run(generate_demos_async(n, seed, skill, threads))
