import numpy as np
import pytest
import torch
from pydantic import ValidationError

import prior
from core_model import AmParams
from prior import (
    ACTION_DIM,
    ActionCoeffs,
    DemoRecord,
    DiffusionConfig,
    DiffusionModel,
    GuidePrior,
    Observation,
    ddpm_forward,
    ddpm_loss,
    ddpm_sample,
    ddpm_train,
    expert_guide_coeffs,
    linear_schedule,
    observe,
    reverse_step,
    sample_guide_points,
)
from scenarios import inclined_scene

SMALL = DiffusionConfig(K=10, hidden=8, emb_dim=4, epochs=3, batch_size=8)


def _dataset(n=12, seed=0):
    rng = np.random.default_rng(seed)
    return [DemoRecord(observation=Observation(p_rel_xy=tuple(rng.uniform(-3, 3, 2)), theta_inc=rng.uniform(0.3, 1.0)),
                       coeffs=rng.normal(size=ACTION_DIM).tolist()) for _ in range(n)]


def test_linear_schedule_endpoints():
    beta = linear_schedule(50, 1e-4, 0.02)
    assert len(beta) == 50
    assert beta[0] == pytest.approx(1e-4) and beta[-1] == pytest.approx(0.02)


def test_forward_noising_is_invertible_in_eps():
    model = DiffusionModel(SMALL)
    a0, eps = np.ones(ACTION_DIM), np.random.default_rng(0).normal(size=ACTION_DIM)
    a_k = ddpm_forward(a0, 4, eps, model)
    ab = model.alpha_bar[3]
    assert np.allclose((a_k - np.sqrt(ab) * a0) / np.sqrt(1.0 - ab), eps)
    with pytest.raises(ValueError):
        ddpm_forward(a0, 0, eps, model)


def _oracle(model, a0):
    def f(a_k, k, obs):
        ab = model.alpha_bar[np.asarray(k) - 1][:, None]
        return (np.atleast_2d(a_k) - np.sqrt(ab) * a0) / np.sqrt(1.0 - ab)
    return f


def test_oracle_denoiser_has_zero_loss_and_samples_target():
    model = DiffusionModel(SMALL)
    a0 = np.linspace(-1.0, 1.0, ACTION_DIM)
    oracle = _oracle(model, a0)
    rng = np.random.default_rng(3)
    eps = rng.normal(size=(5, ACTION_DIM))
    assert ddpm_loss(model, np.tile(a0, (5, 1)), np.arange(1, 6), eps, np.zeros(3), oracle) == pytest.approx(0.0, abs=1e-18)
    obs = Observation(p_rel_xy=(-2.0, 0.5), theta_inc=0.6)
    for seed in (0, 1):
        assert np.allclose(ddpm_sample(model, obs, seed, oracle).as_array(), a0, atol=1e-9)


def test_final_reverse_step_recovers_clean_action():
    model = DiffusionModel(SMALL)
    a0, eps = np.full(ACTION_DIM, 0.3), np.random.default_rng(1).normal(size=ACTION_DIM)
    a1 = ddpm_forward(a0, 1, eps, model)
    assert np.allclose(reverse_step(model, a1, 1, eps, np.zeros(ACTION_DIM)), a0)


def test_training_is_finite_and_deterministic():
    data = _dataset()
    _, losses_a = ddpm_train(data, DiffusionModel(SMALL, seed=0), seed=5)
    _, losses_b = ddpm_train(data, DiffusionModel(SMALL, seed=0), seed=5)
    assert len(losses_a) == SMALL.epochs
    assert np.all(np.isfinite(losses_a))
    assert losses_a == losses_b
    with pytest.raises(ValueError):
        ddpm_train([], DiffusionModel(SMALL))


def test_model_file_restores_predictions(tmp_path):
    model, _ = ddpm_train(_dataset(), DiffusionModel(SMALL), seed=0)
    path = tmp_path / "model.json"
    prior.save_model(model, str(path))
    back = prior.load_model(str(path))
    a = np.random.default_rng(0).normal(size=(2, ACTION_DIM))
    obs = np.zeros(3)
    assert np.allclose(back.predict_eps(a, 3, obs), model.predict_eps(a, 3, obs))
    assert np.allclose(back.mu, model.mu) and np.allclose(back.sd, model.sd)


def test_dataset_jsonl(tmp_path):
    data = _dataset(3)
    path = tmp_path / "demos.jsonl"
    prior.save_dataset(data, str(path))
    assert len(path.read_text().splitlines()) == 3
    assert prior.load_dataset(str(path))[1].coeffs == data[1].coeffs


def test_schemas_reject_bad_values():
    with pytest.raises(ValidationError):
        Observation(p_rel_xy=(0.0, 0.0), theta_inc=2.0)
    with pytest.raises(ValidationError):
        ActionCoeffs(coeffs=[0.0] * 14)
    with pytest.raises(ValidationError):
        DiffusionConfig(beta_start=0.1, beta_end=0.01)


def test_observation_is_in_surface_frame():
    scene = inclined_scene("strike", 40.0, (0.0, -2.0), azimuth_deg=90.0)
    obs = observe(scene)
    assert obs.theta_inc == pytest.approx(np.radians(40.0))
    assert obs.p_rel_xy[0] == pytest.approx(-2.0 - 0.05 * np.sin(np.radians(40.0)), abs=1e-9)
    assert obs.p_rel_xy[1] == pytest.approx(0.0, abs=1e-9)


def test_guides_are_placed_around_task():
    obs = Observation(p_rel_xy=(-2.0, 0.3), theta_inc=np.radians(40.0))
    coeffs = expert_guide_coeffs(obs, AmParams())
    assert np.allclose(coeffs.evaluate(0.0), 0.0)
    task = np.array([0.0, 0.0, 1.2])
    guides = sample_guide_points(coeffs, task, 4)
    assert len(guides) == 4
    assert all(g.guide and g.kind == "quadrotor" for g in guides)
    assert sample_guide_points(coeffs, task, 0) == []
    with pytest.raises(ValueError):
        sample_guide_points(coeffs, task, 3)


def test_guide_prior_fallback_order():
    data = _dataset(4)
    assert GuidePrior().source == "expert"
    assert GuidePrior(dataset=data).source == "nearest-demo"
    assert GuidePrior(DiffusionModel(SMALL), data).source == "diffusion"
    nearest = GuidePrior(dataset=data).coeffs(data[2].observation, AmParams())
    assert nearest.coeffs == data[2].coeffs


def test_demo_acceptance_gate():
    assert prior.accept_demo(10.0, True)
    assert not prior.accept_demo(10.0, False)
    assert not prior.accept_demo(np.inf, True)
    assert not prior.accept_demo(2 * prior.COST_LIMIT, True)


def test_forward_formula_edge_cases():
    model = DiffusionModel(SMALL)
    a0 = np.linspace(0.0, 1.0, ACTION_DIM)
    eps = np.ones(ACTION_DIM)
    k = model.K
    assert np.array_equal(ddpm_forward(a0, k, np.zeros(ACTION_DIM), model), np.sqrt(model.alpha_bar[k - 1]) * a0)
    assert np.array_equal(ddpm_forward(np.zeros(ACTION_DIM), k, eps, model), np.sqrt(1.0 - model.alpha_bar[k - 1]) * eps)


def test_forward_variance_matches_schedule():
    model = DiffusionModel(DiffusionConfig())
    eps = np.random.default_rng(2).standard_normal((20000, ACTION_DIM))
    a_K = ddpm_forward(np.zeros(ACTION_DIM), model.K, eps, model)
    assert np.var(a_K) == pytest.approx(1.0 - model.alpha_bar[-1], rel=0.05)


def test_network_predicts_clean_action_and_noise_is_derived():
    model = DiffusionModel(SMALL)
    rng = np.random.default_rng(3)
    a_k, obs = rng.normal(size=(4, ACTION_DIM)), rng.normal(size=(4, 3))
    k = np.array([1, 3, 7, 10])
    eps_hat = model.predict_eps(a_k, k, obs)
    with torch.no_grad():
        a0_hat = model.net(torch.as_tensor(a_k), torch.as_tensor(k, dtype=torch.long),
                           torch.as_tensor(obs)).numpy()
    for row in range(4):
        assert np.allclose(ddpm_forward(a0_hat[row], int(k[row]), eps_hat[row], model), a_k[row], atol=1e-12)
