"""Forward kinematics, tip Jacobian and damped-least-squares IK for revolute chains"""
import logging
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .config import (
    ARM_MODEL_DIRECTORY, AXIS_NORM_TOLERANCE, DEFAULT_ARM_MODEL, IK_BACKTRACK_STEPS, IK_DAMPING,
    IK_MAX_ITERATIONS, IK_RESTARTS, IK_SOLVE_ITERATIONS, IK_TOLERANCE,
)
from .errors import ConfigurationError, ContractViolation
from .schemas import ArmModelFile

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointSpec:
    """Revolute joint: rotate about `axis` after translating by `origin` in the parent frame"""
    axis: np.ndarray
    origin: np.ndarray
    limit_lo: float
    limit_hi: float
    collision_radius: float


@dataclass(frozen=True)
class ArmModel:
    """Serial chain of revolute joints, described entirely by data"""
    joints: Tuple[JointSpec, ...]
    tip_offset: np.ndarray
    base_pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    name: str = "arm"

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ConfigurationError("an arm needs at least one joint")
        for i, joint in enumerate(self.joints):
            norm = float(np.linalg.norm(joint.axis))
            if abs(norm - 1.0) > AXIS_NORM_TOLERANCE:
                raise ConfigurationError(f"joint {i}: axis is not a unit vector (norm {norm})")
            if not joint.limit_lo < joint.limit_hi:
                raise ConfigurationError(f"joint {i}: limit_lo must be below limit_hi")
            if joint.collision_radius <= 0:
                raise ConfigurationError(f"joint {i}: collision radius must be positive")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.limit_lo for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.limit_hi for j in self.joints])

    @property
    def radii(self) -> np.ndarray:
        return np.array([j.collision_radius for j in self.joints])

    @property
    def reach(self) -> float:
        """Upper bound on the tip's distance from joint 0 (sum of link lengths)"""
        lengths = [np.linalg.norm(j.origin) for j in self.joints[1:]]
        return float(sum(lengths) + np.linalg.norm(self.tip_offset))

    @property
    def joint0_position(self) -> np.ndarray:
        return self.base_pose[:3, :3] @ self.joints[0].origin + self.base_pose[:3, 3]

    def home(self) -> np.ndarray:
        """Zero joint vector: the pose the arm files are written in"""
        return np.zeros(self.n_joints)


@dataclass(frozen=True)
class LinkFrames:
    """World pose of every joint frame, followed by the tip frame"""
    frames: np.ndarray  # (n + 1, 4, 4)

    @property
    def tip(self) -> np.ndarray:
        return self.frames[-1, :3, 3].copy()

    @property
    def origins(self) -> np.ndarray:
        return self.frames[:, :3, 3]


def _rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis"""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def _as_joint_vector(model: ArmModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_joints,):
        raise ContractViolation(
            f"joint vector has shape {q.shape}, arm '{model.name}' expects ({model.n_joints},)"
        )
    return q


def forward_kinematics(model: ArmModel, q) -> LinkFrames:
    """Compose joint transforms from the base out to the tool tip"""
    q = _as_joint_vector(model, q)
    frames = np.empty((model.n_joints + 1, 4, 4))
    rot = model.base_pose[:3, :3].copy()
    pos = model.base_pose[:3, 3].copy()
    for i, joint in enumerate(model.joints):
        pos = pos + rot @ joint.origin
        rot = rot @ _rotation(joint.axis, q[i])
        frames[i] = np.eye(4)
        frames[i, :3, :3] = rot
        frames[i, :3, 3] = pos
    frames[-1] = np.eye(4)
    frames[-1, :3, :3] = rot
    frames[-1, :3, 3] = pos + rot @ model.tip_offset
    return LinkFrames(frames=frames)


def tip_jacobian(model: ArmModel, q) -> np.ndarray:
    """Positional Jacobian (3 x n): column i = world_axis_i x (tip - joint_origin_i)"""
    link_frames = forward_kinematics(model, q)
    tip = link_frames.tip
    jac = np.empty((3, model.n_joints))
    for i, joint in enumerate(model.joints):
        world_axis = link_frames.frames[i, :3, :3] @ joint.axis
        jac[:, i] = np.cross(world_axis, tip - link_frames.frames[i, :3, 3])
    return jac


def clamp_joints(model: ArmModel, q) -> np.ndarray:
    """Project q onto the joint limits"""
    q = _as_joint_vector(model, q)
    return np.clip(q, model.lower, model.upper)


def solve_ik_delta(
    model: ArmModel,
    q,
    target_tip,
    damping: float = IK_DAMPING,
    max_iterations: int = IK_MAX_ITERATIONS,
    tolerance: float = IK_TOLERANCE,
) -> np.ndarray:
    """Damped least squares toward `target_tip`; returns the best clamped iterate.

    Each iteration backtracks along the DLS step until the tip error drops;
    if no fraction of the step helps, the damping doubles for the next try,
    and it halves back toward its starting value after every accepted step.
    Unreachable targets are not an error: the arm ends up stretched toward
    the target and the closest iterate seen is returned.
    """
    q = _as_joint_vector(model, q)
    target_tip = np.asarray(target_tip, dtype=float)
    if target_tip.shape != (3,):
        raise ContractViolation(f"target tip must be a 3-vector, got shape {target_tip.shape}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(target_tip))):
        raise ContractViolation("IK inputs contain NaN or infinite values")

    base_damping = damping
    current = clamp_joints(model, q)
    error = target_tip - forward_kinematics(model, current).tip
    err_norm = float(np.linalg.norm(error))
    for _ in range(max_iterations):
        if err_norm < tolerance:
            break
        jac = tip_jacobian(model, current)
        step = jac.T @ np.linalg.solve(jac @ jac.T + damping * damping * np.eye(3), error)
        alpha = 1.0
        for _ in range(IK_BACKTRACK_STEPS):
            candidate = clamp_joints(model, current + alpha * step)
            cand_error = target_tip - forward_kinematics(model, candidate).tip
            cand_norm = float(np.linalg.norm(cand_error))
            if cand_norm < err_norm:
                current, error, err_norm = candidate, cand_error, cand_norm
                damping = max(base_damping, 0.5 * damping)
                break
            alpha *= 0.5
        else:
            damping *= 2.0
    return current


def solve_ik(
    model: ArmModel,
    target_tip,
    rng: Optional[np.random.Generator] = None,
    q_start=None,
    max_iterations: int = IK_SOLVE_ITERATIONS,
    restarts: int = IK_RESTARTS,
    tolerance: float = IK_TOLERANCE,
) -> np.ndarray:
    """Full IK solve from `q_start` (home when omitted) with random restarts.

    While the tip is still `tolerance` or more from the target, the solver
    starts again from a joint vector drawn uniformly within the limits.
    The closest of all attempts is returned.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    start = model.home() if q_start is None else q_start
    target_tip = np.asarray(target_tip, dtype=float)
    best = solve_ik_delta(model, start, target_tip, max_iterations=max_iterations, tolerance=tolerance)
    best_err = float(np.linalg.norm(forward_kinematics(model, best).tip - target_tip))
    for attempt in range(restarts):
        if best_err < tolerance:
            break
        q = solve_ik_delta(model, rng.uniform(model.lower, model.upper), target_tip,
                           max_iterations=max_iterations, tolerance=tolerance)
        err = float(np.linalg.norm(forward_kinematics(model, q).tip - target_tip))
        logger.debug("IK restart %d: tip error %.2e m", attempt + 1, err)
        if err < best_err:
            best, best_err = q, err
    return best


# ===== Arm model files =====
def build_arm_model(spec: ArmModelFile, name: Optional[str] = None) -> ArmModel:
    """Turn a validated arm file into an ArmModel; `name` overrides the file's own"""
    joints = tuple(
        JointSpec(
            axis=np.array(j.axis, dtype=float),
            origin=np.array(j.origin, dtype=float),
            limit_lo=float(j.limit_lo),
            limit_hi=float(j.limit_hi),
            collision_radius=float(j.collision_radius),
        )
        for j in spec.joints
    )
    base_pose = np.eye(4)
    base_pose[:3, 3] = spec.base_position
    return ArmModel(
        joints=joints,
        tip_offset=np.array(spec.tip_offset, dtype=float),
        base_pose=base_pose,
        name=name or spec.name or "arm",
    )


def resolve_arm_path(name_or_path: str) -> str:
    """An existing file path wins over a bundled model of the same name"""
    if os.path.isfile(name_or_path):
        return name_or_path
    candidate = os.path.join(ARM_MODEL_DIRECTORY, f"{name_or_path}.json")
    if os.path.isfile(candidate):
        return candidate
    raise ConfigurationError(f"arm model '{name_or_path}' not found (looked in {ARM_MODEL_DIRECTORY})")


def load_arm_model(name_or_path: str = DEFAULT_ARM_MODEL) -> ArmModel:
    """Load a JSON arm model by name (configs/arms/<name>.json) or by path"""
    path = resolve_arm_path(name_or_path)
    with open(path, "r", encoding="utf-8") as f:
        raw = f.read()
    try:
        spec = ArmModelFile.model_validate_json(raw)
    except ValidationError as e:
        raise ConfigurationError(f"invalid arm model file {path}: {e}") from e
    default_name = os.path.splitext(os.path.basename(path))[0]
    model = build_arm_model(spec, name=spec.name or default_name)
    logger.debug("Loaded arm model %s with %d joints from %s", model.name, model.n_joints, path)
    return model


def planar_chain(link_lengths: Sequence[float], limit: float = np.pi) -> ArmModel:
    """Planar arm rotating about z with links along x; handy for checks with hand-computed answers"""
    joints = []
    for i in range(len(link_lengths)):
        origin = np.zeros(3) if i == 0 else np.array([link_lengths[i - 1], 0.0, 0.0])
        joints.append(JointSpec(
            axis=np.array([0.0, 0.0, 1.0]),
            origin=origin,
            limit_lo=-limit,
            limit_hi=limit,
            collision_radius=0.05,
        ))
    return ArmModel(
        joints=tuple(joints),
        tip_offset=np.array([link_lengths[-1], 0.0, 0.0]),
        name=f"planar{len(link_lengths)}",
    )


if __name__ == "__main__":
    arm = load_arm_model()
    home = arm.home()
    print("=" * 60)
    print(f"Arm model: {arm.name} ({arm.n_joints} joints, reach {arm.reach:.3f} m)")
    print("=" * 60)
    print(f"Home tip: {forward_kinematics(arm, home).tip}")
    print(f"Home Jacobian:\n{tip_jacobian(arm, home)}")
