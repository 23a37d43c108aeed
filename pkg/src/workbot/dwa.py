"""Dynamic-window local navigation for an omni-directional base.

Velocity commands (vx, vy, omega) are sampled inside the acceleration
window, rolled out over a short horizon with exact constant-twist arcs, and
scored by goal distance, obstacle clearance and speed.  Occupancy grids are
plain PGM images with a JSON sidecar for resolution and origin.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import WorkbotError

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

_PGM_VALUES = {0: OCCUPIED, 128: UNKNOWN, 255: FREE}
_CELL_VALUES = {OCCUPIED: 0, UNKNOWN: 128, FREE: 255}

CLEARANCE_EPS = 1e-3


class NavigationError(WorkbotError):
    pass


class TrajectoryLeavesMap(NavigationError):
    pass


class NoAdmissibleVelocity(NavigationError):
    pass


class GridParseError(NavigationError):
    pass


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Row-major cell grid; cell (r, c) spans a resolution-sized square whose
    lower corner is origin + (c, r) * resolution."""

    cells: np.ndarray
    resolution: float
    origin: np.ndarray

    def __post_init__(self):
        cells = np.ascontiguousarray(np.asarray(self.cells, dtype=np.uint8))
        if cells.ndim != 2:
            raise ValueError("cells must be a 2D array")
        if not np.isin(cells, (FREE, OCCUPIED, UNKNOWN)).all():
            raise ValueError("cells must be Free, Occupied or Unknown")
        if not (self.resolution > 0.0):
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        origin = np.asarray(self.origin, dtype=float).reshape(2)
        cells.setflags(write=False)
        origin.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", origin)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def extent(self) -> tuple[np.ndarray, np.ndarray]:
        hi = self.origin + np.array([self.width, self.height]) * self.resolution
        return self.origin.copy(), hi

    def diagonal(self) -> float:
        return math.hypot(self.width * self.resolution,
                          self.height * self.resolution)

    def blocked_centers(self) -> np.ndarray:
        """(m, 2) xy centres of Occupied and Unknown cells (Unknown counts
        as an obstacle for clearance purposes)."""
        rows, cols = np.nonzero(self.cells != FREE)
        x = self.origin[0] + (cols + 0.5) * self.resolution
        y = self.origin[1] + (rows + 0.5) * self.resolution
        return np.column_stack([x, y])


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class VelocityCommand:
    vx: float
    vy: float
    omega: float


@dataclass(frozen=True)
class DWAConfig:
    v_max: float = 0.8
    v_min: float = -0.8
    omega_max: float = 1.5
    ax: float = 1.0
    ay: float = 1.0
    aomega: float = 2.0
    dt: float = 0.1
    horizon: float = 1.5
    vx_samples: int = 7
    vy_samples: int = 7
    omega_samples: int = 9
    w_goal: float = 1.0
    w_obs: float = 0.2
    w_vel: float = 0.1
    robot_radius: float = 0.2

    def __post_init__(self):
        if self.horizon < self.dt or self.dt <= 0.0:
            raise ValueError("need horizon >= dt > 0")
        if self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")

    @staticmethod
    def from_json(obj: dict) -> "DWAConfig":
        known = {f: obj[f] for f in obj if f in DWAConfig.__dataclass_fields__}
        return DWAConfig(**known)


@dataclass(frozen=True)
class Window:
    vx: tuple[float, float]
    vy: tuple[float, float]
    omega: tuple[float, float]


def dynamic_window(state: RobotState, cfg: DWAConfig) -> Window:
    """Reachable velocity box after one dt, clipped to the absolute limits."""
    def axis(cur, accel, lo, hi):
        return (max(cur - accel * cfg.dt, lo), min(cur + accel * cfg.dt, hi))

    return Window(
        vx=axis(state.vx, cfg.ax, cfg.v_min, cfg.v_max),
        vy=axis(state.vy, cfg.ay, cfg.v_min, cfg.v_max),
        omega=axis(state.omega, cfg.aomega, -cfg.omega_max, cfg.omega_max))


def _integrate(x0: float, y0: float, th0: float, cmds: np.ndarray,
               dt: float, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact constant-twist rollout for (s, 3) commands over ``steps`` * dt.

    Returns positions (s, steps, 2) and headings (s, steps)."""
    vx = cmds[:, 0][:, None]
    vy = cmds[:, 1][:, None]
    om = cmds[:, 2][:, None]
    k = np.arange(steps + 1)
    theta = th0 + om * dt * k                      # (s, steps+1)
    sin_d = np.diff(np.sin(theta), axis=1)
    cos_d = np.diff(np.cos(theta), axis=1)
    straight = np.abs(om) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        dx = (vx * sin_d + vy * cos_d) / om
        dy = (-vx * cos_d + vy * sin_d) / om
    if straight.any():
        ct, st = math.cos(th0), math.sin(th0)
        flat = straight[:, 0]
        dx[flat] = (vx[flat] * ct - vy[flat] * st) * dt
        dy[flat] = (vx[flat] * st + vy[flat] * ct) * dt
    xs = x0 + np.cumsum(dx, axis=1)
    ys = y0 + np.cumsum(dy, axis=1)
    return np.stack([xs, ys], axis=2), theta[:, 1:]


def rollout(state: RobotState, cmd: VelocityCommand,
            cfg: DWAConfig) -> np.ndarray:
    """Poses (x, y, theta) at dt, 2dt, ... horizon under a constant command."""
    steps = int(round(cfg.horizon / cfg.dt))
    cmds = np.array([[cmd.vx, cmd.vy, cmd.omega]])
    pos, theta = _integrate(state.x, state.y, state.theta, cmds, cfg.dt, steps)
    return np.column_stack([pos[0], theta[0]])


def clearance(trajectory, grid: OccupancyGrid, robot_radius: float) -> float:
    """Worst-case margin along a trajectory: distance to the nearest blocked
    cell centre minus the robot radius, floored at zero.

    An all-free map yields the map diagonal as a large sentinel.  Poses
    outside the grid raise TrajectoryLeavesMap."""
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    xy = traj[:, :2]
    lo, hi = grid.extent()
    if (xy < lo).any() or (xy > hi).any():
        raise TrajectoryLeavesMap("trajectory pose outside the grid")
    blocked = grid.blocked_centers()
    if not len(blocked):
        return grid.diagonal()
    d, _ = cKDTree(blocked).query(xy)
    return max(float(d.min()) - robot_radius, 0.0)


def _sample_commands(win: Window, cfg: DWAConfig) -> np.ndarray:
    vxs = np.linspace(win.vx[0], win.vx[1], cfg.vx_samples)
    vys = np.linspace(win.vy[0], win.vy[1], cfg.vy_samples)
    oms = np.linspace(win.omega[0], win.omega[1], cfg.omega_samples)
    grid = np.meshgrid(vxs, vys, oms, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def dwa_step(state: RobotState, goal, grid: OccupancyGrid,
             cfg: DWAConfig | None = None) -> VelocityCommand:
    """Pick the admissible sampled command with the lowest cost.

    cost = w_goal * dist(final pose, goal) + w_obs / (clearance + eps)
         + w_vel * (v_max - speed).  Rollouts that leave the map or touch an
    obstacle are discarded; ties resolve by sample order."""
    cfg = cfg or DWAConfig()
    goal = np.asarray(goal, dtype=float).reshape(2)
    win = dynamic_window(state, cfg)
    cmds = _sample_commands(win, cfg)
    steps = int(round(cfg.horizon / cfg.dt))
    pos, _ = _integrate(state.x, state.y, state.theta, cmds, cfg.dt, steps)

    lo, hi = grid.extent()
    flat = pos.reshape(-1, 2)
    inside = ((flat >= lo) & (flat <= hi)).all(axis=1).reshape(pos.shape[:2])
    admissible = inside.all(axis=1)

    blocked = grid.blocked_centers()
    if len(blocked):
        dmin, _ = cKDTree(blocked).query(flat)
        dmin = dmin.reshape(pos.shape[:2]).min(axis=1)
        clear = np.maximum(dmin - cfg.robot_radius, 0.0)
    else:
        clear = np.full(len(cmds), grid.diagonal())
    admissible &= clear > 0.0
    if not admissible.any():
        raise NoAdmissibleVelocity(
            "every sampled command collides or leaves the map")

    goal_dist = np.linalg.norm(pos[:, -1, :] - goal, axis=1)
    speed = np.hypot(cmds[:, 0], cmds[:, 1])
    cost = (cfg.w_goal * goal_dist + cfg.w_obs / (clear + CLEARANCE_EPS)
            + cfg.w_vel * (cfg.v_max - speed))
    cost[~admissible] = math.inf
    best = int(np.argmin(cost))
    return VelocityCommand(vx=float(cmds[best, 0]), vy=float(cmds[best, 1]),
                           omega=float(cmds[best, 2]))


def step_state(state: RobotState, cmd: VelocityCommand,
               cfg: DWAConfig) -> RobotState:
    """Advance one control period under a constant command."""
    cmds = np.array([[cmd.vx, cmd.vy, cmd.omega]])
    pos, theta = _integrate(state.x, state.y, state.theta, cmds, cfg.dt, 1)
    return RobotState(x=float(pos[0, 0, 0]), y=float(pos[0, 0, 1]),
                      theta=float(theta[0, 0]),
                      vx=cmd.vx, vy=cmd.vy, omega=cmd.omega)


@dataclass(frozen=True)
class EpisodeResult:
    poses: tuple[tuple[float, float, float, float], ...]   # (t, x, y, theta)
    commands: tuple[VelocityCommand, ...]
    reached: bool
    steps: int


def run_episode(state: RobotState, goal, grid: OccupancyGrid,
                cfg: DWAConfig | None = None,
                max_steps: int = 200,
                stop_dist: float = 0.15) -> EpisodeResult:
    """Closed-loop drive toward the goal; stops on arrival, step budget or
    when no admissible command remains."""
    cfg = cfg or DWAConfig()
    goal = np.asarray(goal, dtype=float).reshape(2)
    poses = [(0.0, state.x, state.y, state.theta)]
    commands: list[VelocityCommand] = []
    reached = False
    for step in range(max_steps):
        if math.hypot(state.x - goal[0], state.y - goal[1]) <= stop_dist:
            reached = True
            break
        try:
            cmd = dwa_step(state, goal, grid, cfg)
        except NoAdmissibleVelocity:
            break
        commands.append(cmd)
        state = step_state(state, cmd, cfg)
        poses.append(((step + 1) * cfg.dt, state.x, state.y, state.theta))
    else:
        reached = math.hypot(state.x - goal[0], state.y - goal[1]) <= stop_dist
    return EpisodeResult(poses=tuple(poses), commands=tuple(commands),
                         reached=reached, steps=len(commands))


def save_pose_log(path, poses) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "theta"])
        for t, x, y, theta in poses:
            writer.writerow([repr(float(t)), repr(float(x)),
                             repr(float(y)), repr(float(theta))])


# --- PGM I/O -----------------------------------------------------------------

def _sidecar_path(pgm_path) -> str:
    root, _ = os.path.splitext(str(pgm_path))
    return root + ".json"


def load_pgm(pgm_path, sidecar_path=None) -> OccupancyGrid:
    """Read a P2 occupancy grid (0 occupied, 255 free, 128 unknown) plus its
    JSON sidecar carrying resolution and origin."""
    name = str(pgm_path)
    with open(pgm_path, "r", encoding="ascii", errors="replace") as fh:
        text = fh.read()
    tokens: list[str] = []
    for line in text.splitlines():
        body = line.split("#", 1)[0]
        tokens.extend(body.split())
    if not tokens or tokens[0] != "P2":
        raise GridParseError(f"{name}: expected ASCII 'P2' magic, "
                             f"got {tokens[0] if tokens else 'empty file'!r}")
    if len(tokens) < 4:
        raise GridParseError(f"{name}: truncated header")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise GridParseError(f"{name}: non-integer header fields") from None
    if maxval != 255:
        raise GridParseError(f"{name}: maxval must be 255, got {maxval}")
    data = tokens[4:]
    if len(data) != width * height:
        raise GridParseError(f"{name}: expected {width * height} samples, "
                             f"got {len(data)}")
    cells = np.empty(width * height, dtype=np.uint8)
    for i, tok in enumerate(data):
        try:
            value = int(tok)
        except ValueError:
            raise GridParseError(f"{name}: bad sample {tok!r}") from None
        if value not in _PGM_VALUES:
            raise GridParseError(
                f"{name}: sample {value} is not one of 0/128/255")
        cells[i] = _PGM_VALUES[value]
    sidecar = sidecar_path or _sidecar_path(pgm_path)
    with open(sidecar, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    return OccupancyGrid(cells=cells.reshape(height, width),
                         resolution=float(meta["resolution"]),
                         origin=np.asarray(meta["origin"], dtype=float))


def save_pgm(grid: OccupancyGrid, pgm_path, sidecar_path=None) -> None:
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    for row in grid.cells:
        lines.append(" ".join(str(_CELL_VALUES[int(c)]) for c in row))
    with open(pgm_path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {"origin": [float(grid.origin[0]), float(grid.origin[1])],
            "resolution": float(grid.resolution)}
    with open(sidecar_path or _sidecar_path(pgm_path), "w",
              encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
