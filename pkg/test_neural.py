"""Tests for the MLP, Gaussian policy head, Adam and checkpoints"""
import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.errors import ContractViolation
from src.neural import (
    AdamState, GaussianPolicy, MlpParams, adam_update, gaussian_log_prob, gaussian_sample,
    init_mlp, init_policy, load_checkpoint, mlp_backward, mlp_forward, save_checkpoint,
)
from src.verification import check_log_prob_gradients, check_mlp_gradients, central_difference


def test_zero_network_outputs_zero():
    params = MlpParams(layers=[(np.zeros((4, 3)), np.zeros(4)), (np.zeros((2, 4)), np.zeros(2))])
    y, _ = mlp_forward(params, np.array([1.0, -2.0, 3.0]))
    assert np.array_equal(y, np.zeros(2))


def test_identity_layer():
    params = MlpParams(layers=[(np.eye(3), np.zeros(3))])
    x = np.array([0.3, -0.7, 2.0])
    y, _ = mlp_forward(params, x)
    assert np.array_equal(y, x)


def test_forward_matches_straight_line_evaluation():
    rng = np.random.default_rng(0)
    params = init_mlp([2, 64, 64, 1], rng)
    x = rng.standard_normal(2)
    (w0, b0), (w1, b1), (w2, b2) = params.layers
    expected = w2 @ np.tanh(w1 @ np.tanh(w0 @ x + b0) + b1) + b2
    y, _ = mlp_forward(params, x)
    assert np.max(np.abs(y - expected)) < 1e-12
    batch, _ = mlp_forward(params, np.stack([x, x]))
    assert batch.shape == (2, 1)
    assert np.max(np.abs(batch[0] - expected)) < 1e-12


def test_input_width_checked():
    params = init_mlp([3, 4, 1], np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        mlp_forward(params, np.zeros(2))


def test_backward_with_zero_upstream_gradient():
    rng = np.random.default_rng(1)
    params = init_mlp([3, 5, 2], rng)
    _, cache = mlp_forward(params, rng.standard_normal(3))
    grads = mlp_backward(params, cache, np.zeros(2))
    assert all(np.all(g == 0) for g in grads.arrays())


def test_linear_layer_closed_form_gradient():
    rng = np.random.default_rng(2)
    params = MlpParams(layers=[(rng.standard_normal((2, 3)), np.zeros(2))])
    x = rng.standard_normal(3)
    grad_y = rng.standard_normal(2)
    _, cache = mlp_forward(params, x)
    grads = mlp_backward(params, cache, grad_y)
    assert np.allclose(grads.layers[0][0], np.outer(grad_y, x))
    assert np.allclose(grads.layers[0][1], grad_y)
    assert np.allclose(grads.x, params.layers[0][0].T @ grad_y)


def test_backprop_matches_finite_differences():
    result = check_mlp_gradients(20, np.random.default_rng(3))
    assert result.passed, result.line()


def test_log_prob_gradients_match_finite_differences():
    result = check_log_prob_gradients(20, np.random.default_rng(4))
    assert result.passed, result.line()


def test_log_prob_at_mode():
    policy = GaussianPolicy(MlpParams(layers=[(np.zeros((1, 2)), np.zeros(1))]), np.zeros(1))
    logp = gaussian_log_prob(policy, np.zeros(2), np.zeros(1))
    assert logp == pytest.approx(-0.5 * np.log(2 * np.pi))
    assert logp == pytest.approx(-0.9189, abs=1e-4)
    narrower = GaussianPolicy(policy.mean_net, np.array([np.log(0.5)]))
    assert gaussian_log_prob(narrower, np.zeros(2), np.zeros(1)) - logp == pytest.approx(np.log(2))


def test_sample_mean_is_policy_mean():
    rng = np.random.default_rng(5)
    policy = init_policy(3, 2, [8], rng, output_gain=1.0, log_std_init=-0.3)
    obs = rng.standard_normal(3)
    mean, _ = mlp_forward(policy.mean_net, obs)
    n = 100_000
    sample_rng = np.random.default_rng(6)
    samples, log_probs = gaussian_sample(policy, np.tile(obs, (n, 1)), sample_rng)
    assert samples.shape == (n, 2) and log_probs.shape == (n,)
    sigma = np.exp(policy.log_std)
    assert np.all(np.abs(samples.mean(axis=0) - mean) < 3 * sigma / np.sqrt(n))


def test_sampling_is_deterministic_per_stream():
    policy = init_policy(4, 3, [8, 8], np.random.default_rng(7))
    obs = np.ones(4)
    a1, lp1 = gaussian_sample(policy, obs, np.random.default_rng(8))
    a2, lp2 = gaussian_sample(policy, obs, np.random.default_rng(8))
    assert np.array_equal(a1, a2) and lp1 == lp2
    assert lp1 == pytest.approx(gaussian_log_prob(policy, obs, a1))


def test_policy_log_std_is_clamped():
    policy = init_policy(2, 2, [4], np.random.default_rng(0))
    arrays = policy.arrays()
    arrays[-1] = np.array([-20.0, 20.0])
    assert np.array_equal(policy.with_arrays(arrays).log_std, [-5.0, 2.0])


def test_adam_zero_gradient_is_noop():
    params = [np.array([1.0, -2.0]), np.array([[0.5]])]
    state = AdamState.for_params(params)
    updated = adam_update(state, params, [np.zeros(2), np.zeros((1, 1))], lr=0.1)
    assert all(np.array_equal(a, b) for a, b in zip(params, updated))


def test_adam_first_step_magnitude_is_lr():
    params = [np.array([1.0, -3.0, 0.2])]
    state = AdamState.for_params(params)
    updated = adam_update(state, params, [np.array([0.5, -7.0, 1e-3])], lr=0.01)
    step = updated[0] - params[0]
    assert np.allclose(np.abs(step), 0.01, rtol=1e-4)
    assert np.all(np.sign(step) == -np.sign([0.5, -7.0, 1e-3]))


def test_adam_minimizes_quadratic_bowl():
    w = [np.array([1.0, -0.5, 0.25])]
    state = AdamState.for_params(w)
    for _ in range(500):
        w = adam_update(state, w, [2.0 * w[0]], lr=1e-2)
    assert np.linalg.norm(w[0]) < 1e-3


def test_adam_shape_mismatch():
    state = AdamState.for_params([np.zeros(2)])
    with pytest.raises(ContractViolation):
        adam_update(state, [np.zeros(2)], [np.zeros(3)], lr=0.1)


def test_checkpoint_round_trip_is_exact(tmp_path):
    policy = init_policy(5, 3, [16, 16], np.random.default_rng(11))
    tensors = dict(policy.mean_net.named("policy.mean"))
    tensors["policy.log_std"] = policy.log_std
    tensors["lagrange.lambda"] = np.array([0.125])
    path = str(tmp_path / "ckpt.npz")
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(tensors)
    for name, value in tensors.items():
        assert loaded[name].dtype == np.float64
        assert np.array_equal(loaded[name], value)
    restored = MlpParams.from_named(loaded, "policy.mean")
    assert len(restored.layers) == 3


def test_central_difference_on_known_function():
    grad = central_difference(lambda v: float(np.sum(v ** 3)), np.array([1.0, 2.0]))
    assert np.allclose(grad, [3.0, 12.0], atol=1e-6)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
