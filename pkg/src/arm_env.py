"""Reach-with-obstacle task: dense distance reward, binary collision cost, AR1/AR2 actions.

RL usage (Gymnasium)::

    env = ReachAvoidGymnasium(EnvConfig(action_repr="ar1"))
    obs, info = env.reset(seed=0)
    obs, reward, terminated, truncated, info = env.step(env.action_space.sample())
    cost = info["cost"]

Direct usage returns a :class:`StepResult` per step::

    env = ReachAvoidEnv(EnvConfig())
    obs = env.reset()
    result = env.step(np.zeros(env.action_dim))
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import gymnasium
import numpy as np

from .collision import Aabb, arm_obstacle_query
from .config import MAX_PLACEMENT_ATTEMPTS, TABLE_HALF_EXTENT, TABLE_THICKNESS
from .errors import ConfigurationError, ContractViolation
from .kinematics import (
    ArmModel, LinkFrames, clamp_joints, forward_kinematics, load_arm_model, solve_ik_delta,
)
from .schemas import AabbModel, ActionRepr, EnvConfig

logger = logging.getLogger(__name__)


def make_env_rng(seed: int, worker_index: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, worker index)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, worker_index])))


def compute_reward(tip, target) -> float:
    """Negative Euclidean tip-target distance; 0 at contact"""
    return -float(np.linalg.norm(np.asarray(tip, dtype=float) - np.asarray(target, dtype=float)))


def _to_aabb(region: AabbModel) -> Aabb:
    return Aabb(np.array(region.min_corner, dtype=float), np.array(region.max_corner, dtype=float))


@dataclass
class StepResult:
    """Container returned by :meth:`ReachAvoidEnv.step`"""
    obs: np.ndarray
    reward: float
    cost: float
    done: bool
    info: Dict[str, Any]


class ReachAvoidEnv:
    """Arm must bring its tip to a target while an obstacle sits between base and target.

    Observation:
        AR1: tip(3) + target(3) + obstacle_center(3)          -> 9
        AR2: q(n) + tip(3) + target(3) + obstacle_center(3)   -> n + 9

    Cost is 1 on every step where some link capsule touches the obstacle.
    Collisions never end the episode; only success or the step limit does.
    """

    def __init__(self, config: EnvConfig, arm: Optional[ArmModel] = None,
                 rng: Optional[np.random.Generator] = None):
        self.config = config
        self.arm = arm if arm is not None else load_arm_model(config.arm)
        self.action_repr = ActionRepr(config.action_repr)
        self.rng = rng if rng is not None else make_env_rng(config.seed)
        self.target_region = _to_aabb(config.target_region)
        self.obstacle_region = _to_aabb(config.obstacle_region)
        self.obstacle_size = np.array(config.obstacle_size, dtype=float)
        self.table = Aabb(
            np.array([-TABLE_HALF_EXTENT, -TABLE_HALF_EXTENT, -TABLE_THICKNESS]),
            np.array([TABLE_HALF_EXTENT, TABLE_HALF_EXTENT, 0.0]),
        ) if config.table else None

        self.q: Optional[np.ndarray] = None
        self.frames: Optional[LinkFrames] = None
        self.target: Optional[np.ndarray] = None
        self.obstacle: Optional[Aabb] = None
        self.step_count = 0
        self._episode_over = True

    @property
    def action_dim(self) -> int:
        return 3 if self.action_repr == ActionRepr.AR1 else self.arm.n_joints

    @property
    def observation_dim(self) -> int:
        return 9 if self.action_repr == ActionRepr.AR1 else self.arm.n_joints + 9

    @property
    def tip(self) -> np.ndarray:
        return self.frames.tip

    # ---------- episode start ----------
    def reset(self, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Home pose, fresh target and obstacle; returns the first observation"""
        if rng is not None:
            self.rng = rng
        self.q = self.arm.home()
        self.frames = forward_kinematics(self.arm, self.q)
        self.target = self.rng.uniform(self.target_region.min_corner, self.target_region.max_corner)
        self.obstacle = self._place_obstacle(self.target)
        self.step_count = 0
        self._episode_over = False
        logger.debug("reset: target %s obstacle center %s", self.target, self.obstacle.center)
        return self._observation()

    def _place_obstacle(self, target: np.ndarray) -> Aabb:
        """Rejection-sample an obstacle between the arm base and the target"""
        base_xy = self.arm.joint0_position[:2]
        bearing = target[:2] - base_xy
        length = float(np.linalg.norm(bearing))
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            center = self.rng.uniform(self.obstacle_region.min_corner, self.obstacle_region.max_corner)
            box = Aabb.from_center(center, self.obstacle_size)
            if box.contains(target) or length == 0.0:
                continue
            rel = center[:2] - base_xy
            along = float(rel @ bearing) / length
            lateral = abs(float(rel[0] * bearing[1] - rel[1] * bearing[0])) / length
            if 0.0 < along < length and lateral <= self.config.obstacle_lateral_tolerance:
                return box
        raise ConfigurationError(
            f"could not place the obstacle in {MAX_PLACEMENT_ATTEMPTS} attempts; "
            "target_region and obstacle_region look infeasible"
        )

    # ---------- stepping ----------
    def step(self, action) -> StepResult:
        """Apply one clipped action and score the new pose"""
        if self._episode_over:
            raise ContractViolation("step() called before reset() or after the episode ended")
        action = np.asarray(action, dtype=float)
        if action.shape != (self.action_dim,):
            raise ContractViolation(
                f"action has shape {action.shape}, {self.action_repr.value} expects ({self.action_dim},)"
            )
        if not np.all(np.isfinite(action)):
            raise ContractViolation("action contains NaN or infinite values")
        action = np.clip(action, -1.0, 1.0)

        if self.action_repr == ActionRepr.AR1:
            desired_tip = self.tip + action * self.config.action_scale_cart
            self.q = solve_ik_delta(self.arm, self.q, desired_tip)
        else:
            self.q = clamp_joints(self.arm, self.q + action * self.config.action_scale_joint)
        self.frames = forward_kinematics(self.arm, self.q)
        self.step_count += 1

        tip = self.tip
        distance = float(np.linalg.norm(tip - self.target))
        reward = compute_reward(tip, self.target)
        query = arm_obstacle_query(self.frames, self.arm.radii, [self.obstacle])
        cost = 1.0 if query.any_collision else 0.0
        table_contact = False
        if self.table is not None:
            # link 0 is the base column standing on the table
            table_contact = arm_obstacle_query(self.frames, self.arm.radii, [self.table],
                                               first_link=1).any_collision

        success = distance < self.config.success_radius
        truncated = (not success) and self.step_count >= self.config.max_episode_steps
        done = success or truncated
        self._episode_over = done
        info = {
            "distance": distance,
            "min_clearance": query.min_clearance,
            "success": success,
            "truncated": truncated,
            "table_contact": table_contact,
            "cost": cost,
        }
        return StepResult(obs=self._observation(), reward=reward, cost=cost, done=done, info=info)

    def _observation(self) -> np.ndarray:
        parts = [self.tip, self.target, self.obstacle.center]
        if self.action_repr == ActionRepr.AR2:
            parts.insert(0, self.q)
        return np.concatenate(parts)


class ReachAvoidGymnasium(gymnasium.Env):
    """Gymnasium-compliant wrapper around :class:`ReachAvoidEnv`; cost travels in info["cost"]"""

    metadata = {"render_modes": []}

    def __init__(self, config: Optional[EnvConfig] = None, arm: Optional[ArmModel] = None):
        super().__init__()
        self.base = ReachAvoidEnv(config or EnvConfig(), arm=arm)
        self.action_space = gymnasium.spaces.Box(
            -1.0, 1.0, shape=(self.base.action_dim,), dtype=np.float64
        )
        self.observation_space = gymnasium.spaces.Box(
            -np.inf, np.inf, shape=(self.base.observation_dim,), dtype=np.float64
        )

    def reset(self, *, seed: Optional[int] = None, options=None):
        """Gymnasium reset; the same seed gives the same episode as ReachAvoidEnv"""
        super().reset(seed=seed)
        rng = make_env_rng(seed) if seed is not None else None
        obs = self.base.reset(rng)
        return obs, {}

    def step(self, action):
        res = self.base.step(action)
        terminated = bool(res.info["success"])
        truncated = bool(res.info["truncated"])
        return res.obs, res.reward, terminated, truncated, res.info


if __name__ == "__main__":
    env = ReachAvoidEnv(EnvConfig())
    obs = env.reset()
    print("=" * 60)
    print(f"Arm: {env.arm.name}  action dim: {env.action_dim}  obs dim: {env.observation_dim}")
    print("=" * 60)
    print(f"Target: {env.target}")
    print(f"Obstacle center: {env.obstacle.center}")
    total_cost = 0.0
    for _ in range(20):
        result = env.step(env.rng.uniform(-1.0, 1.0, env.action_dim))
        total_cost += result.cost
        if result.done:
            break
    print(f"Distance after {env.step_count} random steps: {result.info['distance']:.3f} m, cost {total_cost}")
