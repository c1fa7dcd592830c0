"""Numerical and simulation self-checks behind the `gradcheck` and `simcheck` commands"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .collision import (
    Aabb, Capsule, arm_obstacle_query, capsule_aabb_collides, capsules_from_frames, points_aabb_distance,
)
from .kinematics import (
    ArmModel, clamp_joints, forward_kinematics, load_arm_model, solve_ik, solve_ik_delta, tip_jacobian,
)
from .neural import (
    GaussianPolicy, MlpParams, flatten, gaussian_log_prob_grad, init_mlp, log_prob_from_mean,
    mlp_backward, mlp_forward, unflatten,
)
from .ppo import PolicyBatch, compute_gae, make_stream, ppo_policy_loss

logger = logging.getLogger(__name__)

GRAD_REL_TOLERANCE = 1e-4
GAE_TOLERANCE = 1e-12
JACOBIAN_TOLERANCE = 1e-6
IK_TIP_TOLERANCE = 1e-3
IK_PASS_FRACTION = 0.99
COLLISION_BOUNDARY_BAND = 1e-3
FD_STEP = 1e-5
MONTE_CARLO_SAMPLES = 10_000  # points per capsule axis
IK_REACH_FRACTION = 0.9


@dataclass
class CheckResult:
    """Outcome of one self-check; `line` renders it for the console"""
    name: str
    passed: bool
    trials: int
    failures: int
    worst: float  # worst error seen (units depend on the check)
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.trials - self.failures}/{self.trials} ok, "
                f"worst {self.worst:.3e}{'  ' + self.detail if self.detail else ''}")


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """|a - n| / max(|a|, |n|), with a floor so two zero gradients compare equal"""
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-8)
    return float(np.linalg.norm(analytic - numeric)) / scale


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Numeric gradient of scalar `f` at `x`, one coordinate at a time"""
    grad = np.zeros_like(x)
    for i in range(x.size):
        bumped = x.copy()
        bumped[i] += h
        up = f(bumped)
        bumped[i] -= 2.0 * h
        down = f(bumped)
        grad[i] = (up - down) / (2.0 * h)
    return grad


def _random_mlp(rng: np.random.Generator, in_dim: int, out_dim: int) -> MlpParams:
    hidden = list(rng.integers(2, 7, size=int(rng.integers(1, 3))))
    params = init_mlp([in_dim, *hidden, out_dim], rng, output_gain=1.0)
    return MlpParams(layers=[(w, b + 0.1 * rng.standard_normal(b.shape)) for w, b in params.layers])


# ===== gradcheck =====
def check_mlp_gradients(instances: int, rng: np.random.Generator) -> CheckResult:
    """Backprop against central differences, for both parameters and inputs"""
    worst, failures = 0.0, 0
    for _ in range(instances):
        in_dim, out_dim = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        params = _random_mlp(rng, in_dim, out_dim)
        x = rng.standard_normal((int(rng.integers(1, 5)), in_dim))
        grad_y = rng.standard_normal((x.shape[0], out_dim))
        like = params.arrays()

        def loss(theta: np.ndarray) -> float:
            y, _ = mlp_forward(MlpParams.from_arrays(unflatten(theta, like)), x)
            return float(np.sum(y * grad_y))

        _, cache = mlp_forward(params, x)
        grads = mlp_backward(params, cache, grad_y)
        err = relative_error(flatten(grads.arrays()), central_difference(loss, flatten(like)))

        def loss_x(flat_x: np.ndarray) -> float:
            y, _ = mlp_forward(params, flat_x.reshape(x.shape))
            return float(np.sum(y * grad_y))

        err = max(err, relative_error(grads.x.ravel(), central_difference(loss_x, x.ravel())))
        worst = max(worst, err)
        failures += err >= GRAD_REL_TOLERANCE
    return CheckResult("mlp backprop", failures == 0, instances, failures, worst)


def check_log_prob_gradients(instances: int, rng: np.random.Generator) -> CheckResult:
    worst, failures = 0.0, 0
    for _ in range(instances):
        dim = int(rng.integers(1, 8))
        mean = rng.standard_normal(dim)
        log_std = rng.uniform(-1.5, 0.5, dim)
        action = mean + np.exp(log_std) * rng.standard_normal(dim)
        d_mean, d_log_std = gaussian_log_prob_grad(mean, log_std, action)
        n_mean = central_difference(lambda m: float(log_prob_from_mean(m, log_std, action)), mean)
        n_log_std = central_difference(lambda s: float(log_prob_from_mean(mean, s, action)), log_std)
        err = relative_error(np.concatenate([d_mean, d_log_std]), np.concatenate([n_mean, n_log_std]))
        worst = max(worst, err)
        failures += err >= GRAD_REL_TOLERANCE
    return CheckResult("gaussian log-prob", failures == 0, instances, failures, worst)


def check_surrogate_gradients(instances: int, rng: np.random.Generator, clip_eps: float = 0.2) -> CheckResult:
    """Clipped surrogate end to end: policy parameters -> loss"""
    worst, failures = 0.0, 0
    for _ in range(instances):
        obs_dim, act_dim, n = int(rng.integers(2, 6)), int(rng.integers(1, 4)), int(rng.integers(4, 12))
        policy = GaussianPolicy(_random_mlp(rng, obs_dim, act_dim), rng.uniform(-1.0, 0.0, act_dim))
        obs = rng.standard_normal((n, obs_dim))
        mean, _ = mlp_forward(policy.mean_net, obs)
        actions = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)
        # old log-probs from a nearby policy so ratios spread across both sides of the clip range
        log_probs_old = log_prob_from_mean(mean, policy.log_std, actions) + rng.normal(0.0, 0.3, n)
        advantages = rng.standard_normal(n)
        batch = PolicyBatch(obs, actions, log_probs_old, advantages)
        like = policy.arrays()

        def loss(theta: np.ndarray) -> float:
            arrays = unflatten(theta, like)
            candidate = GaussianPolicy(MlpParams.from_arrays(arrays[:-1]), arrays[-1])
            return ppo_policy_loss(batch, candidate, clip_eps)[0]

        _, grads, _ = ppo_policy_loss(batch, policy, clip_eps)
        err = relative_error(flatten(grads), central_difference(loss, flatten(like)))
        worst = max(worst, err)
        failures += err >= GRAD_REL_TOLERANCE
    return CheckResult("clipped surrogate", failures == 0, instances, failures, worst)


def brute_force_gae(rewards, values, dones, bootstrap_value, gamma, lam) -> np.ndarray:
    """Explicit sum of discounted TD residuals up to the first episode end"""
    n = len(rewards)
    next_values = np.append(values[1:], bootstrap_value)
    deltas = [rewards[t] + gamma * next_values[t] * (1.0 - dones[t]) - values[t] for t in range(n)]
    advantages = np.zeros(n)
    for t in range(n):
        total, weight = 0.0, 1.0
        for s in range(t, n):
            total += weight * deltas[s]
            if dones[s]:
                break
            weight *= gamma * lam
        advantages[t] = total
    return advantages


def check_gae(instances: int, rng: np.random.Generator) -> CheckResult:
    """Vectorised GAE and returns against the brute-force sum on random episodes"""
    worst, failures = 0.0, 0
    for _ in range(instances):
        n = int(rng.integers(5, 21))
        rewards = rng.standard_normal(n)
        values = rng.standard_normal(n)
        dones = rng.random(n) < 0.2
        bootstrap = float(rng.standard_normal())
        gamma, lam = float(rng.uniform(0.8, 1.0)), float(rng.uniform(0.8, 1.0))
        adv, ret = compute_gae(rewards, values, dones, bootstrap, gamma, lam)
        expected = brute_force_gae(rewards, values, dones, bootstrap, gamma, lam)
        err = max(float(np.max(np.abs(adv - expected))), float(np.max(np.abs(ret - (expected + values)))))
        worst = max(worst, err)
        failures += err > GAE_TOLERANCE
    return CheckResult("gae vs brute force", failures == 0, instances, failures, worst)


def run_gradcheck(instances: int = 50, gae_instances: int = 100, seed: int = 0) -> List[CheckResult]:
    """All numerical checks on one seeded stream"""
    rng = make_stream(seed, 0)
    return [
        check_mlp_gradients(instances, rng),
        check_log_prob_gradients(instances, rng),
        check_surrogate_gradients(instances, rng),
        check_gae(gae_instances, rng),
    ]


# ===== simcheck =====
def _random_joints(arm: ArmModel, rng: np.random.Generator, fraction: float = 0.8) -> np.ndarray:
    return rng.uniform(fraction * arm.lower, fraction * arm.upper)


def check_jacobian(arm: ArmModel, instances: int, rng: np.random.Generator) -> CheckResult:
    """Analytic tip Jacobian against central differences of FK"""
    worst, failures = 0.0, 0
    for _ in range(instances):
        q = _random_joints(arm, rng)
        numeric = np.zeros((3, arm.n_joints))
        for i in range(arm.n_joints):
            dq = np.zeros(arm.n_joints)
            dq[i] = FD_STEP
            numeric[:, i] = (forward_kinematics(arm, q + dq).tip
                             - forward_kinematics(arm, q - dq).tip) / (2.0 * FD_STEP)
        err = float(np.max(np.abs(tip_jacobian(arm, q) - numeric)))
        worst = max(worst, err)
        failures += err >= JACOBIAN_TOLERANCE
    return CheckResult(f"jacobian ({arm.name})", failures == 0, instances, failures, worst)


def check_ik_round_trip(arm: ArmModel, targets: int, rng: np.random.Generator,
                        joint_step: float = 0.05) -> CheckResult:
    """Targets are FK of a nearby joint vector, so each one is reachable in one action step"""
    errors = np.zeros(targets)
    for k in range(targets):
        q0 = _random_joints(arm, rng)
        q_goal = clamp_joints(arm, q0 + rng.uniform(-joint_step, joint_step, arm.n_joints))
        target = forward_kinematics(arm, q_goal).tip
        q = solve_ik_delta(arm, q0, target)
        errors[k] = float(np.linalg.norm(forward_kinematics(arm, q).tip - target))
    failures = int(np.sum(errors >= IK_TIP_TOLERANCE))
    passed = (targets - failures) >= IK_PASS_FRACTION * targets
    if failures:
        logger.warning("IK missed %d of %d targets (worst %.2e m)", failures, targets, errors.max())
    return CheckResult(f"ik round trip ({arm.name})", passed, targets, failures, float(errors.max()),
                       detail=f"needs >= {IK_PASS_FRACTION:.0%}")


def sample_reachable_targets(arm: ArmModel, count: int, rng: np.random.Generator,
                             reach_fraction: float = IK_REACH_FRACTION) -> np.ndarray:
    """Tips of uniform joint draws, kept when within `reach_fraction` of the reach from joint 0"""
    targets = []
    while len(targets) < count:
        tip = forward_kinematics(arm, rng.uniform(arm.lower, arm.upper)).tip
        if np.linalg.norm(tip - arm.joint0_position) <= reach_fraction * arm.reach:
            targets.append(tip)
    return np.array(targets)


def check_ik_within_reach(arm: ArmModel, targets: int, rng: np.random.Generator) -> CheckResult:
    """Full solves from home toward targets sampled by `sample_reachable_targets`"""
    errors = np.zeros(targets)
    for k, target in enumerate(sample_reachable_targets(arm, targets, rng)):
        q = solve_ik(arm, target, rng=rng)
        errors[k] = float(np.linalg.norm(forward_kinematics(arm, q).tip - target))
    failures = int(np.sum(errors >= IK_TIP_TOLERANCE))
    passed = (targets - failures) >= IK_PASS_FRACTION * targets
    if failures:
        logger.warning("IK from home missed %d of %d in-reach targets (worst %.2e m)",
                       failures, targets, errors.max())
    return CheckResult(f"ik from home ({arm.name})", passed, targets, failures, float(errors.max()),
                       detail=f"targets within {IK_REACH_FRACTION:.0%} of reach, needs >= {IK_PASS_FRACTION:.0%}")


def monte_carlo_capsule_box(capsule: Capsule, box: Aabb, rng: np.random.Generator,
                            samples: int = MONTE_CARLO_SAMPLES) -> float:
    """Approximate segment-box distance from random points along the capsule axis"""
    ts = np.concatenate([[0.0, 1.0], rng.random(samples)])
    points = capsule.p0 + ts[:, None] * (capsule.p1 - capsule.p0)
    return float(points_aabb_distance(points, box).min())


def check_collision(pairs: int, rng: np.random.Generator) -> CheckResult:
    failures, skipped, worst = 0, 0, 0.0
    for _ in range(pairs):
        box = Aabb.from_center(rng.uniform(-0.5, 0.5, 3), rng.uniform(0.05, 0.4, 3))
        p0 = rng.uniform(-0.6, 0.6, 3)
        direction = rng.standard_normal(3)
        p1 = p0 + rng.uniform(0.0, 0.5) * direction / np.linalg.norm(direction)
        capsule = Capsule(p0, p1, float(rng.uniform(0.01, 0.1)))
        oracle_clearance = monte_carlo_capsule_box(capsule, box, rng) - capsule.radius
        if abs(oracle_clearance) < COLLISION_BOUNDARY_BAND:
            skipped += 1
            continue
        result = capsule_aabb_collides(capsule, box)
        worst = max(worst, abs(result.clearance - oracle_clearance))
        failures += result.collides != (oracle_clearance <= 0.0)
    return CheckResult("capsule/box vs monte carlo", failures == 0, pairs - skipped, failures, worst,
                       detail=f"{skipped} boundary cases skipped")


def check_arm_collision(arm: ArmModel, poses: int, rng: np.random.Generator,
                        samples: int = MONTE_CARLO_SAMPLES) -> CheckResult:
    """Whole-arm query against a per-link Monte-Carlo clearance on random poses and boxes"""
    failures, skipped, worst = 0, 0, 0.0
    for _ in range(poses):
        frames = forward_kinematics(arm, rng.uniform(arm.lower, arm.upper))
        box = Aabb.from_center(rng.uniform([-0.6, -0.6, 0.0], [0.6, 0.6, 0.8]), rng.uniform(0.05, 0.3, 3))
        oracle_clearance = min(
            monte_carlo_capsule_box(capsule, box, rng, samples) - capsule.radius
            for capsule in capsules_from_frames(frames, arm.radii)
        )
        if abs(oracle_clearance) <= COLLISION_BOUNDARY_BAND:
            skipped += 1
            continue
        result = arm_obstacle_query(frames, arm.radii, [box])
        err = abs(result.min_clearance - oracle_clearance)
        worst = max(worst, err)
        failures += (result.any_collision != (oracle_clearance <= 0.0)) or err >= COLLISION_BOUNDARY_BAND
    return CheckResult(f"arm/box vs monte carlo ({arm.name})", failures == 0, poses - skipped, failures, worst,
                       detail=f"{skipped} boundary cases skipped")


def run_simcheck(arm: Optional[ArmModel] = None, jacobian_instances: int = 100, ik_targets: int = 1000,
                 ik_reach_targets: int = 1000, collision_pairs: int = 1000, arm_poses: int = 1000,
                 seed: int = 0) -> List[CheckResult]:
    """Jacobian, IK and collision checks for `arm` (panda when omitted) on one seeded stream"""
    arm = arm if arm is not None else load_arm_model()
    rng = make_stream(seed, 1)
    return [
        check_jacobian(arm, jacobian_instances, rng),
        check_ik_round_trip(arm, ik_targets, rng),
        check_ik_within_reach(arm, ik_reach_targets, rng),
        check_collision(collision_pairs, rng),
        check_arm_collision(arm, arm_poses, rng),
    ]
