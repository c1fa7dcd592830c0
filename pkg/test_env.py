"""Tests for the reach-with-obstacle environment and its Gymnasium wrapper"""
import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.arm_env import ReachAvoidEnv, ReachAvoidGymnasium, compute_reward, make_env_rng
from src.collision import Aabb, arm_obstacle_query
from src.errors import ConfigurationError, ContractViolation
from src.kinematics import forward_kinematics
from src.schemas import AabbModel, EnvConfig


def make_env(action_repr: str = "ar1", seed: int = 0, **overrides) -> ReachAvoidEnv:
    config = EnvConfig(action_repr=action_repr, **overrides)
    return ReachAvoidEnv(config, rng=make_env_rng(seed))


def test_compute_reward():
    assert compute_reward([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]) == 0.0
    assert compute_reward([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]) == -1.0
    target = np.array([0.4, 0.0, 0.1])
    ray = np.array([0.0, 0.6, 0.8])
    rewards = [compute_reward(target + d * ray, target) for d in (1.0, 0.5, 0.25, 0.0)]
    assert all(a < b for a, b in zip(rewards, rewards[1:]))


def test_observation_shapes():
    assert make_env("ar1").reset().shape == (9,)
    env = make_env("ar2")
    assert env.reset().shape == (16,)
    assert env.action_dim == 7
    assert make_env("ar1").action_dim == 3


def test_reset_is_deterministic_per_seed():
    first = make_env("ar1", seed=4)
    second = make_env("ar1", seed=4)
    assert np.array_equal(first.reset(), second.reset())
    assert np.array_equal(first.target, second.target)
    assert np.array_equal(first.obstacle.center, second.obstacle.center)
    assert not np.array_equal(make_env("ar1", seed=5).reset(), first.reset())


def test_obstacle_never_contains_target():
    env = make_env("ar1", seed=1)
    base = env.arm.joint0_position[:2]
    for _ in range(1000):
        env.reset()
        assert not env.obstacle.contains(env.target)
        assert env.target_region.contains(env.target)
        # obstacle sits between the base and the target in the horizontal plane
        bearing = env.target[:2] - base
        along = (env.obstacle.center[:2] - base) @ bearing / np.linalg.norm(bearing)
        assert 0.0 < along < np.linalg.norm(bearing)


def test_infeasible_regions_raise():
    # obstacle region entirely behind the base can never lie between base and target
    env = make_env("ar1", obstacle_region=AabbModel(min_corner=(-0.5, -0.05, 0.05),
                                                    max_corner=(-0.3, 0.05, 0.05)))
    with pytest.raises(ConfigurationError):
        env.reset()


def test_zero_joint_action_keeps_pose():
    env = make_env("ar2")
    env.reset()
    q_before = env.q.copy()
    result = env.step(np.zeros(7))
    assert np.array_equal(env.q, q_before)
    assert result.reward == pytest.approx(-np.linalg.norm(env.tip - env.target))
    assert result.reward == pytest.approx(-result.info["distance"])


def test_success_ends_episode():
    env = make_env("ar2")
    env.reset()
    env.target = env.tip.copy()
    result = env.step(np.zeros(7))
    assert result.done
    assert result.info["success"] and not result.info["truncated"]
    with pytest.raises(ContractViolation):
        env.step(np.zeros(7))


def test_cartesian_action_moves_tip():
    env = make_env("ar1")
    env.reset()
    before = env.tip.copy()
    env.step(np.array([1.0, 0.0, 0.0]))
    assert env.tip[0] == pytest.approx(before[0] + 0.05, abs=1e-3)
    assert env.tip[1:] == pytest.approx(before[1:], abs=1e-3)


def test_actions_are_clipped():
    env = make_env("ar2")
    env.reset()
    env.step(np.full(7, 10.0))
    assert np.allclose(env.q, 0.05)


def test_bad_actions_rejected():
    env = make_env("ar1")
    with pytest.raises(ContractViolation):
        env.step(np.zeros(3))  # before reset
    env.reset()
    with pytest.raises(ContractViolation):
        env.step(np.zeros(7))
    with pytest.raises(ContractViolation):
        env.step(np.array([np.nan, 0.0, 0.0]))


def test_truncation_and_cost_equivalence():
    env = make_env("ar2", seed=2, max_episode_steps=25)
    env.reset()
    rng = np.random.default_rng(0)
    steps = 0
    while True:
        result = env.step(rng.uniform(-1, 1, 7))
        steps += 1
        query = arm_obstacle_query(forward_kinematics(env.arm, env.q), env.arm.radii, [env.obstacle])
        assert result.cost == (1.0 if query.any_collision else 0.0)
        assert result.info["cost"] == result.cost
        assert -env.arm.reach - 1.0 <= result.reward <= 0.0
        if result.done:
            break
    assert steps <= 25
    if not result.info["success"]:
        assert result.info["truncated"] and steps == 25


def test_obstacle_contact_costs_but_does_not_terminate():
    env = make_env("ar2", max_episode_steps=5)
    env.reset()
    env.obstacle = Aabb.from_center(env.tip, [0.04, 0.04, 0.04])
    result = env.step(np.zeros(7))
    assert result.cost == 1.0
    assert not result.done


def test_table_contact_ignores_base_link():
    env = make_env("ar2")
    env.reset()
    result = env.step(np.zeros(7))
    assert not result.info["table_contact"]
    # shoulder pitched forward a quarter turn drives the tip 0.25 m below the tabletop
    env.q = env.arm.home()
    env.q[1] = np.pi / 2
    result = env.step(np.zeros(7))
    assert result.info["table_contact"]


def test_trajectory_is_pure_function_of_seed_and_actions():
    actions = np.random.default_rng(9).uniform(-1, 1, (30, 3))

    def rollout():
        env = make_env("ar1", seed=8)
        out = [env.reset()]
        for a in actions:
            r = env.step(a)
            out.append(np.concatenate([r.obs, [r.reward, r.cost]]))
            if r.done:
                break
        return np.concatenate(out)

    assert np.array_equal(rollout(), rollout())


def test_gymnasium_wrapper():
    env = ReachAvoidGymnasium(EnvConfig(action_repr="ar2"))
    obs, info = env.reset(seed=3)
    assert env.observation_space.shape == (16,)
    assert env.action_space.shape == (7,)
    assert obs.shape == (16,)
    obs, reward, terminated, truncated, info = env.step(env.action_space.sample())
    assert "cost" in info and info["cost"] in (0.0, 1.0)
    assert isinstance(terminated, bool) and isinstance(truncated, bool)
    again, _ = ReachAvoidGymnasium(EnvConfig(action_repr="ar2")).reset(seed=3)
    first, _ = env.reset(seed=3)
    assert np.array_equal(first, again)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
