"""Pre-grasp planning and grasp monitoring.

Tall objects are approached from the front, flat ones from the top.  Around
the nominal approach a small yaw fan is sampled and the first candidate the
arm can reach wins.  Grasp success is judged from gripper force and the
finger gap implied by motor positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial.transform import Rotation

from . import kinematics
from .errors import WorkbotError
from .geometry import Pose, unit
from .kinematics import IkResult, KinematicChain, NoConvergence

Approach = Literal["top", "frontal"]
GraspResult = Literal["grasped", "empty"]

HEIGHT_THRESHOLD = 0.06


class GraspError(WorkbotError):
    pass


class NoReachableCandidate(GraspError):
    pass


@dataclass(frozen=True)
class GraspCandidate:
    pregrasp_pose: Pose
    approach: Approach
    offset: float
    score: float
    yaw: float


@dataclass(frozen=True)
class GripperFeedback:
    """Motor positions (radians) and normalized force readings for two fingers."""

    positions: tuple[float, float]
    forces: tuple[float, float]

    def __post_init__(self):
        if any(not (0.0 <= f <= 1.0) for f in self.forces):
            raise ValueError(f"forces must lie in [0, 1], got {self.forces}")


@dataclass(frozen=True)
class GraspMonitorConfig:
    force_min: float = 0.3
    gap_min: float = 0.005
    gap_max: float = 0.09
    # linear finger model: gap = gap_open - travel_per_rad * (pos0 + pos1)
    gap_open: float = 0.10
    travel_per_rad: float = 0.025


def decide_approach(object_height: float,
                    threshold: float = HEIGHT_THRESHOLD) -> Approach:
    """Frontal for objects strictly taller than the threshold, else top."""
    if object_height < 0.0:
        raise ValueError(f"object height cannot be negative: {object_height}")
    return "frontal" if object_height > threshold else "top"


def _approach_axis(object_pose: Pose, approach: Approach,
                   base_position) -> np.ndarray:
    if approach == "top":
        return np.array([0.0, 0.0, -1.0])
    delta = object_pose.position - np.asarray(base_position, dtype=float).reshape(3)
    horizontal = np.array([delta[0], delta[1], 0.0])
    if np.linalg.norm(horizontal) < 1e-12:
        raise ValueError("object sits directly above the arm base; "
                         "frontal approach direction is undefined")
    return unit(horizontal)


def _nominal_rotation(axis: np.ndarray, approach: Approach) -> np.ndarray:
    # tool z points along the approach direction
    if approach == "top":
        x = np.array([1.0, 0.0, 0.0])
    else:
        x = np.array([0.0, 0.0, -1.0])
    y = np.cross(axis, x)
    return np.column_stack([x, unit(y), axis])


def sample_pregrasp(object_pose: Pose, approach: Approach,
                    offset: float = 0.05, n: int = 9,
                    yaw_spread: float = math.pi / 2,
                    base_position=(0.0, 0.0, 0.0)) -> list[GraspCandidate]:
    """Pre-grasp poses displaced by ``offset`` against the approach direction.

    Yaw values sweep [-yaw_spread/2, +yaw_spread/2] uniformly and come back
    ordered by |yaw| ascending, so the nominal grasp is tried first.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    if offset < 0.0 or yaw_spread < 0.0:
        raise ValueError("offset and yaw_spread must be non-negative")
    axis = _approach_axis(object_pose, approach, base_position)
    nominal = _nominal_rotation(axis, approach)
    position = object_pose.position - offset * axis
    yaws = [0.0] if n == 1 else list(np.linspace(-yaw_spread / 2.0,
                                                 yaw_spread / 2.0, n))
    yaws.sort(key=lambda y: (abs(y), y))
    out = []
    for yaw in yaws:
        rot = Rotation.from_rotvec(yaw * axis).as_matrix() @ nominal
        out.append(GraspCandidate(
            pregrasp_pose=Pose.from_rotation(rot, position),
            approach=approach, offset=offset,
            score=-abs(yaw), yaw=float(yaw)))
    return out


def select_reachable(chain: KinematicChain,
                     candidates: list[GraspCandidate], q0,
                     solver=None, **ik_kwargs) -> tuple[GraspCandidate, IkResult]:
    """First-fit scan: returns the first candidate the IK solver reaches."""
    if not candidates:
        raise ValueError("no candidates to test")
    solve = solver or kinematics.ik_dls
    for cand in candidates:
        try:
            result = solve(chain, cand.pregrasp_pose, q0, **ik_kwargs)
        except NoConvergence:
            continue
        return cand, result
    raise NoReachableCandidate(
        f"none of the {len(candidates)} pre-grasp candidates is reachable")


def grasp_monitor(fb: GripperFeedback,
                  cfg: GraspMonitorConfig | None = None) -> GraspResult:
    """Grasped when mean force reaches force_min and the finger gap is plausible."""
    cfg = cfg or GraspMonitorConfig()
    mean_force = (fb.forces[0] + fb.forces[1]) / 2.0
    gap = max(cfg.gap_open - cfg.travel_per_rad * (fb.positions[0] + fb.positions[1]),
              0.0)
    if mean_force >= cfg.force_min and cfg.gap_min <= gap <= cfg.gap_max:
        return "grasped"
    return "empty"
