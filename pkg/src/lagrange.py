"""Lagrange multiplier for the episode-cost constraint and the penalized advantage"""
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolation


@dataclass(frozen=True)
class LagrangeState:
    """lam >= 0 always; `frozen` pins it (used to check cPPO reduces to PPO)"""
    lam: float
    cost_limit: float
    dual_lr: float
    frozen: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ContractViolation(f"lambda must be non-negative, got {self.lam}")
        if self.dual_lr <= 0:
            raise ContractViolation(f"dual_lr must be positive, got {self.dual_lr}")


def penalized_advantage(adv_r, adv_c, lam: float) -> np.ndarray:
    """(A_r - lam A_c) / (1 + lam); lam = 0 gives back A_r unchanged"""
    adv_r = np.asarray(adv_r, dtype=float)
    adv_c = np.asarray(adv_c, dtype=float)
    if adv_r.shape != adv_c.shape:
        raise ContractViolation(f"advantage shapes differ: {adv_r.shape} vs {adv_c.shape}")
    if lam < 0:
        raise ContractViolation(f"lambda must be non-negative, got {lam}")
    return (adv_r - lam * adv_c) / (1.0 + lam)


def lambda_update(state: LagrangeState, mean_episode_cost: float) -> LagrangeState:
    """Projected dual ascent: lam <- max(0, lam + dual_lr (mean_episode_cost - d))"""
    if not np.isfinite(mean_episode_cost) or mean_episode_cost < 0:
        raise ContractViolation(f"mean episode cost must be finite and >= 0, got {mean_episode_cost}")
    if state.frozen:
        return state
    lam = max(0.0, state.lam + state.dual_lr * (mean_episode_cost - state.cost_limit))
    return replace(state, lam=lam)
