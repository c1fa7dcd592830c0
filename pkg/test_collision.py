"""Tests for point/segment/capsule vs box queries"""
import os
import sys

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.collision import (
    Aabb, Capsule, arm_obstacle_query, capsule_aabb_collides, point_aabb_distance, points_aabb_distance,
    segment_aabb_distance,
)
from src.errors import ContractViolation
from src.kinematics import forward_kinematics, load_arm_model
from src.verification import check_arm_collision

UNIT_BOX = Aabb(np.zeros(3), np.ones(3))


def test_point_distances():
    assert point_aabb_distance([0.5, 0.5, 0.5], UNIT_BOX) == 0.0
    assert point_aabb_distance([2.0, 0.5, 0.5], UNIT_BOX) == pytest.approx(1.0)
    assert point_aabb_distance([2.0, 2.0, 0.5], UNIT_BOX) == pytest.approx(np.sqrt(2.0))


def test_segment_distances():
    assert segment_aabb_distance([0.2, 0.2, 0.2], [0.8, 0.8, 0.8], UNIT_BOX) == 0.0
    assert segment_aabb_distance([2.0, 0.5, 0.5], [3.0, 0.5, 0.5], UNIT_BOX) == pytest.approx(1.0, abs=1e-9)
    # passes straight through the box without an endpoint inside
    assert segment_aabb_distance([-1.0, 0.5, 0.5], [2.0, 0.5, 0.5], UNIT_BOX) == 0.0
    # closest point in the segment interior, above an edge
    d = segment_aabb_distance([-1.0, 2.0, 0.5], [2.0, 2.0, 0.5], UNIT_BOX)
    assert d == pytest.approx(1.0, abs=1e-9)


def test_segment_distance_matches_dense_sampling():
    rng = np.random.default_rng(11)
    ts = np.linspace(0.0, 1.0, 4096)
    for _ in range(1000):
        box = Aabb.from_center(rng.uniform(-1, 1, 3), rng.uniform(0.1, 1.0, 3))
        p0, p1 = rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3)
        oracle = float(points_aabb_distance(p0 + ts[:, None] * (p1 - p0), box).min())
        assert abs(segment_aabb_distance(p0, p1, box) - oracle) < 1e-3


def test_capsule_verdicts():
    far = Capsule([5.0, 5.0, 5.0], [6.0, 5.0, 5.0], 0.1)
    result = capsule_aabb_collides(far, UNIT_BOX)
    assert not result.collides and result.clearance > 0

    through = Capsule([-1.0, 0.5, 0.5], [2.0, 0.5, 0.5], 0.05)
    assert capsule_aabb_collides(through, UNIT_BOX).collides


def test_touching_capsule_counts_as_contact():
    # segment 0.25 above the top face, radius exactly 0.25 (both exact in binary)
    touching = Capsule([0.25, 0.5, 1.25], [0.75, 0.5, 1.25], 0.25)
    result = capsule_aabb_collides(touching, UNIT_BOX)
    assert result.clearance == 0.0
    assert result.collides


def test_translation_invariance():
    capsule = Capsule([1.5, 0.25, 0.5], [2.5, 0.75, 0.5], 0.125)
    offset = np.array([0.5, -1.0, 2.0])
    moved = Capsule(capsule.p0 + offset, capsule.p1 + offset, capsule.radius)
    a = capsule_aabb_collides(capsule, UNIT_BOX).clearance
    b = capsule_aabb_collides(moved, UNIT_BOX.translated(offset)).clearance
    assert abs(a - b) < 1e-12


def test_growing_box_never_increases_clearance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        box = Aabb.from_center(rng.uniform(-1, 1, 3), rng.uniform(0.1, 0.5, 3))
        capsule = Capsule(rng.uniform(-2, 2, 3), rng.uniform(-2, 2, 3), 0.05)
        before = capsule_aabb_collides(capsule, box).clearance
        after = capsule_aabb_collides(capsule, box.expanded(0.1)).clearance
        assert after <= before + 1e-12


def test_invalid_shapes_rejected():
    with pytest.raises(ContractViolation):
        Capsule([0, 0, 0], [1, 0, 0], 0.0)
    with pytest.raises(ContractViolation):
        Aabb([1, 0, 0], [0, 1, 1])


def test_arm_query_far_and_enclosing():
    arm = load_arm_model("panda")
    frames = forward_kinematics(arm, arm.home())
    far = Aabb.from_center([3.0, 3.0, 3.0], [0.1, 0.1, 0.1])
    result = arm_obstacle_query(frames, arm.radii, [far])
    assert not result.any_collision
    assert result.min_clearance > 0

    around_tip = Aabb.from_center(frames.tip, [0.04, 0.04, 0.04])
    result = arm_obstacle_query(frames, arm.radii, [far, around_tip])
    assert result.any_collision
    assert result.closest_link == arm.n_joints - 1

    empty = arm_obstacle_query(frames, arm.radii, [])
    assert not empty.any_collision and empty.closest_link == -1


def test_arm_query_rejects_wrong_radii():
    arm = load_arm_model("panda")
    frames = forward_kinematics(arm, arm.home())
    with pytest.raises(ContractViolation):
        arm_obstacle_query(frames, arm.radii[:-1], [UNIT_BOX])


def test_arm_query_first_link_skips_base_column():
    arm = load_arm_model("panda")
    frames = forward_kinematics(arm, arm.home())
    table = Aabb([-1.0, -1.0, -0.05], [1.0, 1.0, 0.01])
    assert arm_obstacle_query(frames, arm.radii, [table]).any_collision
    above = arm_obstacle_query(frames, arm.radii, [table], first_link=1)
    assert not above.any_collision
    assert above.closest_link >= 1


def test_arm_query_matches_monte_carlo():
    result = check_arm_collision(load_arm_model("panda"), 200, np.random.default_rng(21))
    assert result.failures == 0
    assert result.trials > 150
    assert result.worst < 1e-3


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
