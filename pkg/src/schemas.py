"""Pydantic models for config files and run reports"""
import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import (
    ACTION_SCALE_CART, ACTION_SCALE_JOINT, AXIS_NORM_TOLERANCE, CLIP_EPS, COST_LIMIT,
    DEFAULT_ARM_MODEL, DEFAULT_OUTPUT_DIRECTORY, DESK_SCALE_FINAL_WINDOW,
    DESK_SCALE_MAX_EPISODE_STEPS, DESK_SCALE_MAX_EPOCHS, DUAL_LR, FULL_SCALE_FINAL_WINDOW,
    GAE_LAMBDA, GAMMA, HIDDEN_SIZES, LOG_STD_INIT, MAX_EPISODE_STEPS, MAX_EPOCHS,
    OBSTACLE_SIZE, POLICY_LR, REPORT_SCHEMA_VERSION, REWARD_THRESHOLD_FRACTION,
    STEPS_PER_EPOCH, SUCCESS_RADIUS, TARGET_KL, UPDATE_MINIBATCH, UPDATE_PASSES, VALUE_LR,
)

Vec3 = Tuple[float, float, float]


class ActionRepr(str, Enum):
    """AR1 = Cartesian tip deltas through IK, AR2 = joint angle deltas"""
    AR1 = "ar1"
    AR2 = "ar2"


class Algorithm(str, Enum):
    PPO = "ppo"
    CPPO = "cppo"


# ===== Arm model file =====
class JointSpecModel(BaseModel):
    """One revolute joint as written in an arm model file"""
    axis: Vec3
    origin: Vec3
    limit_lo: float
    limit_hi: float
    collision_radius: float = Field(..., gt=0)

    @model_validator(mode="after")
    def _check_joint(self):
        norm = math.sqrt(sum(c * c for c in self.axis))
        if abs(norm - 1.0) > AXIS_NORM_TOLERANCE:
            raise ValueError(f"joint axis {self.axis} is not a unit vector (norm {norm})")
        if not self.limit_lo < self.limit_hi:
            raise ValueError(f"limit_lo {self.limit_lo} must be below limit_hi {self.limit_hi}")
        if not self.limit_lo <= 0.0 <= self.limit_hi:
            raise ValueError("joint limits must admit the home pose q = 0")
        return self


class ArmModelFile(BaseModel):
    """Serial revolute chain: {"joints": [...], "tip_offset": [x, y, z]}"""
    name: Optional[str] = None
    joints: List[JointSpecModel] = Field(..., min_length=1)
    tip_offset: Vec3
    base_position: Vec3 = (0.0, 0.0, 0.0)


# ===== Geometry =====
class AabbModel(BaseModel):
    min_corner: Vec3
    max_corner: Vec3

    @model_validator(mode="after")
    def _check_corners(self):
        if any(lo > hi for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError(f"min_corner {self.min_corner} exceeds max_corner {self.max_corner}")
        return self


# ===== Environment / trainer / experiment configs =====
class EnvConfig(BaseModel):
    """Reach-with-obstacle task settings"""
    arm: str = DEFAULT_ARM_MODEL  # model name under configs/arms or a path
    action_repr: ActionRepr = ActionRepr.AR1
    max_episode_steps: int = Field(MAX_EPISODE_STEPS, ge=1)
    action_scale_cart: float = Field(ACTION_SCALE_CART, gt=0)
    action_scale_joint: float = Field(ACTION_SCALE_JOINT, gt=0)
    success_radius: float = Field(SUCCESS_RADIUS, gt=0)
    target_region: AabbModel = Field(default_factory=lambda: AabbModel(
        min_corner=(0.25, -0.1, 0.05), max_corner=(0.45, 0.1, 0.25)))
    obstacle_region: AabbModel = Field(default_factory=lambda: AabbModel(
        min_corner=(0.12, -0.08, 0.05), max_corner=(0.28, 0.08, 0.05)))
    obstacle_size: Vec3 = OBSTACLE_SIZE
    obstacle_lateral_tolerance: float = Field(0.05, ge=0)
    table: bool = True
    seed: int = 0

    @model_validator(mode="after")
    def _check_obstacle(self):
        if any(s <= 0 for s in self.obstacle_size):
            raise ValueError("obstacle_size components must be positive")
        return self


class TrainerConfig(BaseModel):
    """PPO / cPPO hyperparameters"""
    gamma: float = Field(GAMMA, gt=0, le=1)
    gae_lambda: float = Field(GAE_LAMBDA, gt=0, le=1)
    clip_eps: float = Field(CLIP_EPS, gt=0, lt=1)
    policy_lr: float = Field(POLICY_LR, gt=0)
    value_lr: float = Field(VALUE_LR, gt=0)
    update_minibatch: int = Field(UPDATE_MINIBATCH, ge=1)
    update_passes: int = Field(UPDATE_PASSES, ge=1)
    target_kl: float = Field(TARGET_KL, gt=0)
    steps_per_epoch: int = Field(STEPS_PER_EPOCH, ge=1)
    max_epochs: int = Field(MAX_EPOCHS, ge=1)
    algorithm: Algorithm = Algorithm.PPO
    cost_limit: float = Field(COST_LIMIT, ge=0)
    dual_lr: float = Field(DUAL_LR, gt=0)
    lambda_init: float = Field(0.0, ge=0)
    freeze_lambda: bool = False
    num_envs: int = Field(1, ge=1)
    hidden_sizes: List[int] = Field(default_factory=lambda: list(HIDDEN_SIZES))
    log_std_init: float = LOG_STD_INIT

    @model_validator(mode="after")
    def _check_envs(self):
        if self.num_envs > self.steps_per_epoch:
            raise ValueError("num_envs cannot exceed steps_per_epoch")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden layer widths must be positive")
        return self


class ExperimentConfig(BaseModel):
    """One experiment = one (algorithm, action representation) cell over several seeds"""
    env: EnvConfig = Field(default_factory=EnvConfig)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)
    seeds: List[int] = Field(default_factory=lambda: [1, 2, 3], min_length=1)
    output_dir: str = DEFAULT_OUTPUT_DIRECTORY
    desk_scale: bool = False
    final_window: Optional[int] = Field(None, ge=1)
    reward_threshold: Optional[float] = None
    plateau_patience: int = Field(0, ge=0)
    plateau_success_rate: float = Field(0.95, gt=0, le=1)
    save_checkpoint: bool = False

    @model_validator(mode="after")
    def _check_seeds(self):
        if any(seed < 0 for seed in self.seeds):
            raise ValueError("seeds must be non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        return self

    def resolved(self) -> "ExperimentConfig":
        """Copy with desk-scale caps applied and every default filled in"""
        env = self.env.model_copy()
        trainer = self.trainer.model_copy()
        if self.desk_scale:
            trainer.max_epochs = min(trainer.max_epochs, DESK_SCALE_MAX_EPOCHS)
            env.max_episode_steps = min(env.max_episode_steps, DESK_SCALE_MAX_EPISODE_STEPS)
        final_window = self.final_window
        if final_window is None:
            final_window = DESK_SCALE_FINAL_WINDOW if self.desk_scale else FULL_SCALE_FINAL_WINDOW
        reward_threshold = self.reward_threshold
        if reward_threshold is None:
            reward_threshold = -REWARD_THRESHOLD_FRACTION * env.max_episode_steps
        return self.model_copy(update={
            "env": env,
            "trainer": trainer,
            "final_window": final_window,
            "reward_threshold": reward_threshold,
        })


# ===== Metrics / reports =====
class EpochMetrics(BaseModel):
    """What one train_epoch call reports"""
    model_config = ConfigDict(populate_by_name=True)

    epoch: int
    mean_ep_reward: float
    mean_ep_cost: float
    mean_ep_len: float
    lambda_: float = Field(0.0, alias="lambda")
    kl: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    cost_value_loss: float = 0.0
    success_rate: float = 0.0
    cost_rate: float = 0.0
    cumulative_cost: float = 0.0
    episodes: int = 0
    policy_passes: int = 0

    def csv_row(self) -> Dict[str, float]:
        """Row in the fixed metrics CSV column order"""
        return {
            "epoch": self.epoch,
            "mean_ep_reward": self.mean_ep_reward,
            "mean_ep_cost": self.mean_ep_cost,
            "mean_ep_len": self.mean_ep_len,
            "lambda": self.lambda_,
            "kl": self.kl,
            "policy_loss": self.policy_loss,
            "value_loss": self.value_loss,
            "cost_value_loss": self.cost_value_loss,
        }


class RunSummary(BaseModel):
    mean_final_cost: float
    std_final_cost: float
    mean_final_reward: float
    epochs_to_reward_threshold: Optional[int] = None
    final_window: int
    reward_threshold: float


class RunReport(BaseModel):
    """Per-epoch series plus end-of-run summary for one seed"""
    model_config = ConfigDict(populate_by_name=True)

    schema_version: int = Field(REPORT_SCHEMA_VERSION, alias="schema")
    algorithm: Algorithm
    action_repr: ActionRepr
    seed: int
    cost_limit: float
    epochs_completed: int
    series: Dict[str, List[float]]
    summary: RunSummary

    @property
    def label(self) -> str:
        """Same as harness.run_name for this run"""
        return f"{self.algorithm.value}_{self.action_repr.value}_seed{self.seed}"
