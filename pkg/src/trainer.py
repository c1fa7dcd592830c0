"""PPO / Lagrangian PPO trainer: collect, estimate advantages, update, report"""
import logging
from typing import Any, Dict, List, Optional

import numpy as np

from .arm_env import ReachAvoidEnv, make_env_rng
from .config import (
    ADVANTAGE_STD_FLOOR, KL_STOP_FACTOR, POLICY_OUTPUT_GAIN, VALUE_OUTPUT_GAIN,
)
from .errors import TrainingDiverged
from .kinematics import ArmModel, load_arm_model
from .lagrange import LagrangeState, lambda_update, penalized_advantage
from .neural import (
    AdamState, GaussianPolicy, MlpParams, adam_update, init_mlp, init_policy, load_checkpoint,
    save_checkpoint,
)
from .ppo import (
    EnvWorker, PolicyBatch, RolloutBuffer, ValueNets, approx_kl, collect_rollout, make_stream,
    normalize_advantages, ppo_policy_loss, value_loss,
)
from .schemas import Algorithm, EnvConfig, EpochMetrics, TrainerConfig

logger = logging.getLogger(__name__)

# stream keys under a run seed; env workers use (seed, worker_index)
_ACTION_STREAM = 1
_INIT_STREAM = 2
_SHUFFLE_STREAM = 3


class Trainer:
    """Owns the networks, optimizers, env workers and (for cPPO) the Lagrange multiplier.

    Rollouts only read the parameters and updates replace them afterwards, so
    collection and optimization never overlap.
    """

    def __init__(self, config: TrainerConfig, env_config: EnvConfig, seed: int,
                 arm: Optional[ArmModel] = None):
        self.config = config
        self.env_config = env_config
        self.seed = seed
        self.algorithm = Algorithm(config.algorithm)
        self.arm = arm if arm is not None else load_arm_model(env_config.arm)

        self.workers: List[EnvWorker] = []
        for w in range(config.num_envs):
            env = ReachAvoidEnv(env_config, arm=self.arm, rng=make_env_rng(seed, w))
            self.workers.append(EnvWorker(env=env, rng=make_stream(seed, w, _ACTION_STREAM)))
        obs_dim = self.workers[0].env.observation_dim
        act_dim = self.workers[0].env.action_dim

        init_rng = make_stream(seed, 0, _INIT_STREAM)
        self.shuffle_rng = make_stream(seed, 0, _SHUFFLE_STREAM)
        hidden = list(config.hidden_sizes)
        self.policy = init_policy(obs_dim, act_dim, hidden, init_rng,
                                  output_gain=POLICY_OUTPUT_GAIN, log_std_init=config.log_std_init)
        self.value_nets = ValueNets(
            reward=init_mlp([obs_dim, *hidden, 1], init_rng, output_gain=VALUE_OUTPUT_GAIN),
            cost=init_mlp([obs_dim, *hidden, 1], init_rng, output_gain=VALUE_OUTPUT_GAIN),
        )
        self.policy_opt = AdamState.for_params(self.policy.arrays())
        self.value_r_opt = AdamState.for_params(self.value_nets.reward.arrays())
        self.value_c_opt = AdamState.for_params(self.value_nets.cost.arrays())

        self.lagrange: Optional[LagrangeState] = None
        if self.algorithm == Algorithm.CPPO:
            self.lagrange = LagrangeState(
                lam=config.lambda_init,
                cost_limit=config.cost_limit,
                dual_lr=config.dual_lr,
                frozen=config.freeze_lambda,
            )
        self.epoch = 0
        self.cumulative_cost = 0.0

    @property
    def lam(self) -> float:
        return self.lagrange.lam if self.lagrange is not None else 0.0

    def train_epoch(self) -> EpochMetrics:
        """Collect one epoch, update lambda (cPPO), then the policy and both value nets"""
        cfg = self.config
        buffer = collect_rollout(self.policy, self.value_nets, self.workers, cfg.steps_per_epoch)
        buffer.compute_advantages(cfg.gamma, cfg.gae_lambda)
        episodes = buffer.episode_summary()

        if self.lagrange is not None:
            self.lagrange = lambda_update(self.lagrange, episodes["cost"])
            advantages = penalized_advantage(buffer.adv_r, buffer.adv_c, self.lagrange.lam)
        else:
            advantages = buffer.adv_r
        advantages = normalize_advantages(advantages, ADVANTAGE_STD_FLOOR)

        losses = self._update(buffer, advantages)
        self.epoch += 1
        epoch_cost = float(buffer.costs.sum())
        self.cumulative_cost += epoch_cost

        metrics = EpochMetrics(
            epoch=self.epoch,
            mean_ep_reward=episodes["reward"],
            mean_ep_cost=episodes["cost"],
            mean_ep_len=episodes["length"],
            lambda_=self.lam,
            kl=losses["kl"],
            policy_loss=losses["policy_loss"],
            value_loss=losses["value_loss"],
            cost_value_loss=losses["cost_value_loss"],
            success_rate=episodes["success_rate"],
            cost_rate=epoch_cost / cfg.steps_per_epoch,
            cumulative_cost=self.cumulative_cost,
            episodes=int(episodes["count"]),
            policy_passes=int(losses["policy_passes"]),
        )
        logger.info(
            "epoch %d [%s seed %d] reward %.2f cost %.2f len %.1f lambda %.3f kl %.4f",
            metrics.epoch, self.algorithm.value, self.seed, metrics.mean_ep_reward,
            metrics.mean_ep_cost, metrics.mean_ep_len, metrics.lambda_, metrics.kl,
        )
        return metrics

    def _update(self, buffer: RolloutBuffer, advantages: np.ndarray) -> Dict[str, float]:
        cfg = self.config
        batch = PolicyBatch(buffer.obs, buffer.actions, buffer.log_probs, advantages)
        n = buffer.capacity
        policy_losses: List[float] = []
        value_losses: List[float] = []
        cost_value_losses: List[float] = []
        policy_active = True
        policy_passes = 0

        for _ in range(cfg.update_passes):
            if policy_active:
                kl = approx_kl(self.policy, buffer.obs, buffer.actions, buffer.log_probs)
                if kl > KL_STOP_FACTOR * cfg.target_kl:
                    logger.debug("epoch %d: early stop after %d policy passes (kl %.4f)",
                                 self.epoch + 1, policy_passes, kl)
                    policy_active = False
                else:
                    policy_passes += 1
            order = self.shuffle_rng.permutation(n)
            for start in range(0, n, cfg.update_minibatch):
                idx = order[start:start + cfg.update_minibatch]
                if policy_active:
                    loss, grads, _ = ppo_policy_loss(batch.subset(idx), self.policy, cfg.clip_eps)
                    self._check_finite("policy", loss)
                    self.policy = self.policy.with_arrays(
                        adam_update(self.policy_opt, self.policy.arrays(), grads, cfg.policy_lr)
                    )
                    policy_losses.append(loss)

                loss_r, grads_r = value_loss(self.value_nets.reward, buffer.obs[idx], buffer.ret_r[idx])
                self._check_finite("value", loss_r)
                self.value_nets.reward = MlpParams.from_arrays(
                    adam_update(self.value_r_opt, self.value_nets.reward.arrays(), grads_r, cfg.value_lr)
                )
                value_losses.append(loss_r)

                loss_c, grads_c = value_loss(self.value_nets.cost, buffer.obs[idx], buffer.ret_c[idx])
                self._check_finite("cost value", loss_c)
                self.value_nets.cost = MlpParams.from_arrays(
                    adam_update(self.value_c_opt, self.value_nets.cost.arrays(), grads_c, cfg.value_lr)
                )
                cost_value_losses.append(loss_c)

        return {
            "kl": approx_kl(self.policy, buffer.obs, buffer.actions, buffer.log_probs),
            "policy_loss": float(np.mean(policy_losses)) if policy_losses else 0.0,
            "value_loss": float(np.mean(value_losses)),
            "cost_value_loss": float(np.mean(cost_value_losses)),
            "policy_passes": policy_passes,
        }

    def _check_finite(self, name: str, loss: float) -> None:
        if not np.isfinite(loss):
            raise TrainingDiverged(f"{name} loss became {loss}", epoch=self.epoch + 1,
                                   state=self.state_dump(), seed=self.seed)

    def state_dump(self) -> Dict[str, Any]:
        """Small JSON-friendly snapshot for diagnosing a diverged run"""
        return {
            "epoch": self.epoch,
            "seed": self.seed,
            "algorithm": self.algorithm.value,
            "lambda": self.lam,
            "log_std": [float(x) for x in self.policy.log_std],
            "policy_param_norms": [float(np.linalg.norm(a)) for a in self.policy.arrays()],
            "value_param_norms": [float(np.linalg.norm(a)) for a in self.value_nets.reward.arrays()],
            "cost_value_param_norms": [float(np.linalg.norm(a)) for a in self.value_nets.cost.arrays()],
            "policy_nonfinite": [bool(not np.all(np.isfinite(a))) for a in self.policy.arrays()],
        }

    # ---------- checkpoints ----------
    def save(self, path: str) -> None:
        """Policy, value nets and lambda in one .npz checkpoint"""
        tensors = {}
        tensors.update(self.policy.mean_net.named("policy.mean"))
        tensors["policy.log_std"] = self.policy.log_std
        tensors.update(self.value_nets.reward.named("value.reward"))
        tensors.update(self.value_nets.cost.named("value.cost"))
        tensors["lagrange.lambda"] = np.array([self.lam])
        save_checkpoint(path, tensors)
        logger.info("Saved checkpoint to %s", path)

    def load(self, path: str) -> None:
        tensors = load_checkpoint(path)
        self.policy = GaussianPolicy(
            mean_net=MlpParams.from_named(tensors, "policy.mean"),
            log_std=tensors["policy.log_std"],
        )
        self.value_nets = ValueNets(
            reward=MlpParams.from_named(tensors, "value.reward"),
            cost=MlpParams.from_named(tensors, "value.cost"),
        )
        if self.lagrange is not None:
            self.lagrange = LagrangeState(
                lam=float(tensors["lagrange.lambda"][0]),
                cost_limit=self.lagrange.cost_limit,
                dual_lr=self.lagrange.dual_lr,
                frozen=self.lagrange.frozen,
            )
