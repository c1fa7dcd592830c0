"""Capsule vs axis-aligned box queries that produce the per-step collision cost"""
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .config import COARSE_SAMPLES, GOLDEN_SECTION_TOLERANCE
from .errors import ContractViolation
from .kinematics import LinkFrames

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Capsule:
    """Segment p0-p1 swept by a sphere; p0 == p1 is a plain sphere"""
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "p1", np.asarray(self.p1, dtype=float))
        if self.radius <= 0:
            raise ContractViolation(f"capsule radius must be positive, got {self.radius}")
        if not (np.all(np.isfinite(self.p0)) and np.all(np.isfinite(self.p1))):
            raise ContractViolation("capsule endpoints must be finite")


@dataclass(frozen=True)
class Aabb:
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", np.asarray(self.min_corner, dtype=float))
        object.__setattr__(self, "max_corner", np.asarray(self.max_corner, dtype=float))
        if np.any(self.min_corner > self.max_corner):
            raise ContractViolation(
                f"box min_corner {self.min_corner} exceeds max_corner {self.max_corner}"
            )

    @classmethod
    def from_center(cls, center, size) -> "Aabb":
        """Box of full edge lengths `size` centred on `center`"""
        center = np.asarray(center, dtype=float)
        half = np.asarray(size, dtype=float) / 2.0
        return cls(min_corner=center - half, max_corner=center + half)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.min_corner) + np.asarray(self.max_corner)) / 2.0

    def contains(self, p) -> bool:
        """Closed test: points on a face are inside"""
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.min_corner) and np.all(p <= self.max_corner))

    def translated(self, offset) -> "Aabb":
        offset = np.asarray(offset, dtype=float)
        return Aabb(self.min_corner + offset, self.max_corner + offset)

    def expanded(self, margin: float) -> "Aabb":
        """Grow every face outward by `margin`"""
        return Aabb(self.min_corner - margin, self.max_corner + margin)


@dataclass(frozen=True)
class CollisionResult:
    collides: bool
    clearance: float  # distance minus radius, negative when penetrating


@dataclass(frozen=True)
class ArmQueryResult:
    any_collision: bool
    min_clearance: float
    closest_link: int  # -1 when there are no obstacles


def points_aabb_distance(points: np.ndarray, box: Aabb) -> np.ndarray:
    """Distances from each row of `points` to the solid box"""
    gap = np.maximum(np.maximum(box.min_corner - points, 0.0), points - box.max_corner)
    return np.linalg.norm(gap, axis=-1)


def point_aabb_distance(p, box: Aabb) -> float:
    """Euclidean distance from one point to the solid box (0 inside)"""
    return float(points_aabb_distance(np.asarray(p, dtype=float), box))


def segment_intersects_aabb(p0: np.ndarray, p1: np.ndarray, box: Aabb) -> bool:
    """Slab clipping of the segment against the box"""
    d = p1 - p0
    t_enter, t_exit = 0.0, 1.0
    for axis in range(3):
        if d[axis] == 0.0:
            if p0[axis] < box.min_corner[axis] or p0[axis] > box.max_corner[axis]:
                return False
            continue
        ta = (box.min_corner[axis] - p0[axis]) / d[axis]
        tb = (box.max_corner[axis] - p0[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t_enter = max(t_enter, ta)
        t_exit = min(t_exit, tb)
        if t_enter > t_exit:
            return False
    return True


def segment_aabb_distance(p0, p1, box: Aabb) -> float:
    """Minimum distance between segment p0-p1 and the box.

    Distance to a convex set along a segment is convex in the segment
    parameter, so a coarse scan brackets the minimum and golden-section
    search refines it.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if segment_intersects_aabb(p0, p1, box):
        return 0.0

    d = p1 - p0
    ts = np.linspace(0.0, 1.0, COARSE_SAMPLES)
    coarse = points_aabb_distance(p0 + ts[:, None] * d, box)
    k = int(np.argmin(coarse))
    lo = ts[max(k - 1, 0)]
    hi = ts[min(k + 1, COARSE_SAMPLES - 1)]

    def f(t: float) -> float:
        return point_aabb_distance(p0 + t * d, box)

    a = hi - _INV_PHI * (hi - lo)
    b = lo + _INV_PHI * (hi - lo)
    fa, fb = f(a), f(b)
    while hi - lo > GOLDEN_SECTION_TOLERANCE:
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - _INV_PHI * (hi - lo)
            fa = f(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + _INV_PHI * (hi - lo)
            fb = f(b)
    return float(min(coarse[k], fa, fb, f(0.5 * (lo + hi))))


def capsule_aabb_collides(capsule: Capsule, box: Aabb) -> CollisionResult:
    """Contact at exactly zero clearance counts as a collision"""
    distance = segment_aabb_distance(capsule.p0, capsule.p1, box)
    clearance = distance - capsule.radius
    return CollisionResult(collides=distance <= capsule.radius, clearance=float(clearance))


def capsules_from_frames(frames: LinkFrames, radii: Sequence[float]) -> List[Capsule]:
    """Capsule i spans frame i's origin to frame i+1's origin; the last one ends at the tip"""
    origins = frames.origins
    n_links = origins.shape[0] - 1
    if len(radii) != n_links:
        raise ContractViolation(f"expected {n_links} link radii, got {len(radii)}")
    return [Capsule(origins[i].copy(), origins[i + 1].copy(), float(radii[i])) for i in range(n_links)]


def arm_obstacle_query(frames: LinkFrames, radii: Sequence[float],
                       obstacles: Sequence[Aabb], first_link: int = 0) -> ArmQueryResult:
    """Collision verdict, smallest clearance and the link that attains it.

    Links before `first_link` are left out; `closest_link` still counts from 0.
    """
    any_collision = False
    min_clearance = np.inf
    closest_link = -1
    capsules = capsules_from_frames(frames, radii)
    for link in range(first_link, len(capsules)):
        for box in obstacles:
            result = capsule_aabb_collides(capsules[link], box)
            any_collision = any_collision or result.collides
            if result.clearance < min_clearance:
                min_clearance = result.clearance
                closest_link = link
    return ArmQueryResult(any_collision=any_collision, min_clearance=float(min_clearance),
                          closest_link=closest_link)
