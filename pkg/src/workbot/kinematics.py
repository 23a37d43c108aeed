"""Denavit-Hartenberg chains, forward kinematics and damped-least-squares IK.

The chain is pure data (loaded from JSON), so swapping arms is a config
change.  IK works on a 6-vector pose error whose orientation part is the
rotation log expressed in the end-effector frame; the wrist-roll component a
5-DoF arm cannot control is down-weighted rather than ignored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import WorkbotError
from .geometry import Pose

N_JOINTS = 5

DEFAULT_ROT_WEIGHTS = (1.0, 1.0, 0.2)
FD_STEP = 1e-6


class KinematicsError(WorkbotError):
    pass


class NoConvergence(KinematicsError):
    def __init__(self, msg: str, best_q=None, pos_err: float = math.inf,
                 ang_err: float = math.inf, iterations: int = 0):
        super().__init__(msg)
        self.best_q = best_q
        self.pos_err = pos_err
        self.ang_err = ang_err
        self.iterations = iterations


@dataclass(frozen=True)
class DhJoint:
    """One revolute joint: classic DH row plus position limits (radians)."""

    a: float
    alpha: float
    d: float
    theta_offset: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"joint limits inverted: [{self.lo}, {self.hi}]")


@dataclass(frozen=True, eq=False)
class KinematicChain:
    joints: tuple[DhJoint, ...]
    base: Pose = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.base is None:
            object.__setattr__(self, "base", Pose.identity())
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) != N_JOINTS:
            raise ValueError(f"chain must have {N_JOINTS} joints, "
                             f"got {len(self.joints)}")

    def clamp(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float).reshape(N_JOINTS)
        lo = np.array([j.lo for j in self.joints])
        hi = np.array([j.hi for j in self.joints])
        return np.clip(q, lo, hi)

    def within_limits(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float).reshape(N_JOINTS)
        return all(j.lo - tol <= qi <= j.hi + tol
                   for j, qi in zip(self.joints, q))

    def with_base(self, base: Pose) -> "KinematicChain":
        return replace(self, base=base)


def load_chain(path, base: Pose | None = None) -> KinematicChain:
    """Chain from a JSON array of {a, alpha, d, theta_offset, lo, hi} rows."""
    with open(path, "r", encoding="utf-8") as fh:
        rows = json.load(fh)
    joints = tuple(DhJoint(a=float(r["a"]), alpha=float(r["alpha"]),
                           d=float(r["d"]), theta_offset=float(r["theta_offset"]),
                           lo=float(r["lo"]), hi=float(r["hi"])) for r in rows)
    return KinematicChain(joints=joints, base=base or Pose.identity())


def _dh_matrix(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_matrix(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(N_JOINTS)
    t = chain.base.matrix()
    for joint, qi in zip(chain.joints, q):
        t = t @ _dh_matrix(joint.a, joint.alpha, joint.d, qi + joint.theta_offset)
    return t


def fk(chain: KinematicChain, q) -> Pose:
    """End-effector pose in the base frame for joint angles q."""
    return Pose.from_matrix(fk_matrix(chain, q))


def pose_error(target: Pose, current: Pose,
               rot_weights=DEFAULT_ROT_WEIGHTS) -> np.ndarray:
    """6-vector error: world position delta, then the weighted rotation log
    (current -> target) expressed in the current end-effector frame."""
    e_pos = target.position - current.position
    r_cur = current.rotation()
    r_err = r_cur.T @ target.rotation()
    e_rot = Rotation.from_matrix(r_err).as_rotvec()
    return np.concatenate([e_pos, np.asarray(rot_weights, dtype=float) * e_rot])


def error_jacobian(chain: KinematicChain, target: Pose, q,
                   step: float = FD_STEP,
                   rot_weights=DEFAULT_ROT_WEIGHTS) -> np.ndarray:
    """Central finite-difference Jacobian of the pose error wrt joint angles."""
    q = np.asarray(q, dtype=float).reshape(N_JOINTS)
    jac = np.zeros((6, N_JOINTS))
    for j in range(N_JOINTS):
        qp = q.copy()
        qm = q.copy()
        qp[j] += step
        qm[j] -= step
        ep = pose_error(target, fk(chain, qp), rot_weights)
        em = pose_error(target, fk(chain, qm), rot_weights)
        jac[:, j] = (ep - em) / (2.0 * step)
    return jac


@dataclass(frozen=True, eq=False)
class IkResult:
    q: np.ndarray
    iterations: int
    pos_err: float
    ang_err: float


def ik_dls(chain: KinematicChain, target: Pose, q0,
           tol_pos: float = 1e-3,
           tol_ang: float = math.radians(0.5),
           max_iters: int = 100,
           lam: float = 0.1,
           rot_weights=DEFAULT_ROT_WEIGHTS,
           fd_step: float = FD_STEP) -> IkResult:
    """Damped-least-squares IK with joint-limit clamping at every iterate.

    Succeeds when the position error norm is within tol_pos and the weighted
    orientation error norm within tol_ang; otherwise raises NoConvergence
    carrying the best error seen.
    """
    q = chain.clamp(np.asarray(q0, dtype=float))
    best = (math.inf, math.inf, q)
    for it in range(max_iters + 1):
        err = pose_error(target, fk(chain, q), rot_weights)
        pos_err = float(np.linalg.norm(err[:3]))
        ang_err = float(np.linalg.norm(err[3:]))
        if pos_err + ang_err < best[0] + best[1]:
            best = (pos_err, ang_err, q.copy())
        if pos_err <= tol_pos and ang_err <= tol_ang:
            return IkResult(q=q, iterations=it, pos_err=pos_err, ang_err=ang_err)
        if it == max_iters:
            break
        jac = error_jacobian(chain, target, q, step=fd_step,
                             rot_weights=rot_weights)
        # e(q + dq) ~ e(q) + J dq = 0  =>  (J^T J + lam^2 I) dq = -J^T e
        lhs = jac.T @ jac + (lam * lam) * np.eye(N_JOINTS)
        dq = np.linalg.solve(lhs, -jac.T @ err)
        q = chain.clamp(q + dq)
    raise NoConvergence(
        f"no convergence in {max_iters} iterations "
        f"(best position error {best[0]:.3e} m, orientation {best[1]:.3e} rad)",
        best_q=best[2], pos_err=best[0], ang_err=best[1], iterations=max_iters)
