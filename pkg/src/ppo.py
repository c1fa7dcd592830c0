"""On-policy rollout collection, GAE for reward and cost streams, and PPO losses"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arm_env import ReachAvoidEnv
from .errors import ContractViolation
from .neural import (
    GaussianPolicy, MlpParams, gaussian_log_prob_grad, gaussian_sample, log_prob_from_mean,
    mlp_backward, mlp_forward,
)

logger = logging.getLogger(__name__)


def make_stream(seed: int, *keys: int) -> np.random.Generator:
    """Philox stream for (seed, keys...); every consumer of randomness gets its own key"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


@dataclass
class ValueNets:
    reward: MlpParams
    cost: MlpParams


def predict_value(net: MlpParams, obs) -> np.ndarray:
    """Scalar value estimate per observation row"""
    y, _ = mlp_forward(net, obs)
    return y[..., 0]


@dataclass
class EpisodeStats:
    ret: float
    cost: float
    length: int
    success: bool


@dataclass
class EnvWorker:
    """One env instance plus its action-sampling stream and the episode in progress"""
    env: ReachAvoidEnv
    rng: np.random.Generator
    obs: Optional[np.ndarray] = None
    ep_ret: float = 0.0
    ep_cost: float = 0.0
    ep_len: int = 0

    def ensure_started(self) -> np.ndarray:
        """Reset the env on first use or after an episode ended"""
        if self.obs is None:
            self.obs = self.env.reset()
            self.ep_ret, self.ep_cost, self.ep_len = 0.0, 0.0, 0
        return self.obs


class RolloutBuffer:
    """Fixed-capacity store for one epoch of experience.

    `terminals` marks every place GAE must not look past: real episode ends
    and the cut at the end of each worker's segment. Truncated episodes and
    cut segments carry a bootstrap value in `bootstrap_r` / `bootstrap_c`.
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.log_probs = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.costs = np.zeros(capacity)
        self.values_r = np.zeros(capacity)
        self.values_c = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.bootstrap_r = np.zeros(capacity)
        self.bootstrap_c = np.zeros(capacity)
        self.adv_r: Optional[np.ndarray] = None
        self.adv_c: Optional[np.ndarray] = None
        self.ret_r: Optional[np.ndarray] = None
        self.ret_c: Optional[np.ndarray] = None
        self.episodes: List[EpisodeStats] = []
        self.partial_episodes: List[EpisodeStats] = []
        self.ptr = 0

    @property
    def full(self) -> bool:
        return self.ptr == self.capacity

    def store(self, obs, action, log_prob, reward, cost, value_r, value_c, done) -> int:
        """Append one transition and return its index"""
        if self.full:
            raise ContractViolation("rollout buffer is full")
        t = self.ptr
        self.obs[t] = obs
        self.actions[t] = action
        self.log_probs[t] = log_prob
        self.rewards[t] = reward
        self.costs[t] = cost
        self.values_r[t] = value_r
        self.values_c[t] = value_c
        self.dones[t] = done
        self.terminals[t] = done
        self.ptr += 1
        return t

    def close_step(self, t: int, bootstrap_r: float, bootstrap_c: float) -> None:
        """Mark step `t` as the end of a segment and record the bootstrap values"""
        self.terminals[t] = True
        self.bootstrap_r[t] = bootstrap_r
        self.bootstrap_c[t] = bootstrap_c

    def compute_advantages(self, gamma: float, lam: float) -> None:
        """Reward and cost GAE; allowed exactly once per filled buffer"""
        if self.adv_r is not None:
            raise ContractViolation("advantages were already computed for this buffer")
        if not self.full:
            raise ContractViolation(f"buffer holds {self.ptr} of {self.capacity} steps")
        self.adv_r, self.ret_r = compute_gae(
            self.rewards + gamma * self.bootstrap_r, self.values_r, self.terminals, 0.0, gamma, lam
        )
        self.adv_c, self.ret_c = compute_gae(
            self.costs + gamma * self.bootstrap_c, self.values_c, self.terminals, 0.0, gamma, lam
        )

    def episode_summary(self) -> Dict[str, float]:
        """Means over completed episodes, or over the unfinished ones if none completed"""
        episodes = self.episodes or self.partial_episodes
        if not episodes:
            return {"reward": 0.0, "cost": 0.0, "length": 0.0, "success_rate": 0.0, "count": 0}
        return {
            "reward": float(np.mean([e.ret for e in episodes])),
            "cost": float(np.mean([e.cost for e in episodes])),
            "length": float(np.mean([e.length for e in episodes])),
            "success_rate": float(np.mean([e.success for e in self.episodes])) if self.episodes else 0.0,
            "count": len(self.episodes),
        }


def collect_rollout(policy: GaussianPolicy, value_nets: ValueNets,
                    workers: Sequence[EnvWorker], steps: int) -> RolloutBuffer:
    """Run the policy for exactly `steps` env steps split evenly over the workers.

    Workers are visited in index order and each keeps its episode running
    across calls, so results depend only on the per-worker streams.
    """
    if isinstance(workers, EnvWorker):
        workers = [workers]
    k = len(workers)
    if k < 1 or steps < k:
        raise ContractViolation(f"cannot split {steps} steps over {k} workers")
    first = workers[0].env
    buffer = RolloutBuffer(steps, first.observation_dim, first.action_dim)
    shares = [steps // k + (1 if i < steps % k else 0) for i in range(k)]

    for worker, share in zip(workers, shares):
        obs = worker.ensure_started()
        for i in range(share):
            action, log_prob = gaussian_sample(policy, obs, worker.rng)
            value_r = float(predict_value(value_nets.reward, obs))
            value_c = float(predict_value(value_nets.cost, obs))
            result = worker.env.step(action)
            t = buffer.store(obs, action, log_prob, result.reward, result.cost, value_r, value_c, result.done)
            worker.ep_ret += result.reward
            worker.ep_cost += result.cost
            worker.ep_len += 1

            if result.done:
                buffer.episodes.append(EpisodeStats(
                    worker.ep_ret, worker.ep_cost, worker.ep_len, bool(result.info["success"])
                ))
                if result.info["truncated"]:
                    buffer.close_step(t, float(predict_value(value_nets.reward, result.obs)),
                                      float(predict_value(value_nets.cost, result.obs)))
                obs = worker.env.reset()
                worker.ep_ret, worker.ep_cost, worker.ep_len = 0.0, 0.0, 0
            else:
                obs = result.obs
                if i == share - 1:
                    buffer.close_step(t, float(predict_value(value_nets.reward, obs)),
                                      float(predict_value(value_nets.cost, obs)))
        worker.obs = obs
        if worker.ep_len > 0:
            buffer.partial_episodes.append(EpisodeStats(worker.ep_ret, worker.ep_cost, worker.ep_len, False))
    return buffer


def compute_gae(rewards, values, dones, bootstrap_value: float, gamma: float,
                lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """delta_t = r_t + gamma v_{t+1} (1 - done_t) - v_t ; A_t = delta_t + gamma lam (1 - done_t) A_{t+1}"""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if not (rewards.shape == values.shape == dones.shape) or rewards.ndim != 1:
        raise ContractViolation("rewards, values and dones must be 1-d and of equal length")
    n = rewards.shape[0]
    advantages = np.zeros(n)
    next_value = float(bootstrap_value)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        advantages[t] = running
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(adv: np.ndarray, std_floor: float) -> np.ndarray:
    """Zero mean, unit std; std below `std_floor` is replaced by the floor"""
    return (adv - adv.mean()) / max(float(adv.std()), std_floor)


@dataclass
class PolicyBatch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    advantages: np.ndarray

    def subset(self, idx: np.ndarray) -> "PolicyBatch":
        return PolicyBatch(self.obs[idx], self.actions[idx], self.log_probs_old[idx], self.advantages[idx])


@dataclass
class PolicyLossInfo:
    kl: float
    clip_fraction: float
    ratio: np.ndarray = field(repr=False)


def ppo_policy_loss(batch: PolicyBatch, policy: GaussianPolicy,
                    clip_eps: float) -> Tuple[float, List[np.ndarray], PolicyLossInfo]:
    """Clipped surrogate -mean(min(rho A, clip(rho) A)) and its gradient w.r.t. policy.arrays()"""
    n = batch.obs.shape[0]
    mean, cache = mlp_forward(policy.mean_net, batch.obs)
    logp = log_prob_from_mean(mean, policy.log_std, batch.actions)
    ratio = np.exp(logp - batch.log_probs_old)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr_unclipped = ratio * batch.advantages
    surr_clipped = clipped * batch.advantages
    loss = -float(np.mean(np.minimum(surr_unclipped, surr_clipped)))

    # gradient flows only where the unclipped term is the active minimum
    active = surr_unclipped <= surr_clipped
    dloss_dlogp = np.where(active, -surr_unclipped / n, 0.0)
    dmean, dlog_std = gaussian_log_prob_grad(mean, policy.log_std, batch.actions)
    grad_mean = dmean * dloss_dlogp[:, None]
    grad_log_std = np.sum(dlog_std * dloss_dlogp[:, None], axis=0)
    net_grads = mlp_backward(policy.mean_net, cache, grad_mean)

    info = PolicyLossInfo(
        kl=float(np.mean(batch.log_probs_old - logp)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        ratio=ratio,
    )
    return loss, net_grads.arrays() + [grad_log_std], info


def approx_kl(policy: GaussianPolicy, obs: np.ndarray, actions: np.ndarray, log_probs_old: np.ndarray) -> float:
    """Sample estimate of KL(old || new) on the stored actions"""
    mean, _ = mlp_forward(policy.mean_net, obs)
    return float(np.mean(log_probs_old - log_prob_from_mean(mean, policy.log_std, actions)))


def value_loss(net: MlpParams, obs: np.ndarray, targets: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    """Mean squared error of a scalar-output value network"""
    y, cache = mlp_forward(net, obs)
    diff = y[:, 0] - targets
    n = diff.shape[0]
    grads = mlp_backward(net, cache, (2.0 / n) * diff[:, None])
    return float(np.mean(diff * diff)), grads.arrays()
