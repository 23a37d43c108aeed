"""Rotating-table tracking: 2D SORT-style tracking, 3D nearest-neighbour
association, circular motion estimation and background change detection.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import WorkbotError
from .geometry import wrap_angle

TWO_PI = 2.0 * math.pi


class TrackingError(WorkbotError):
    pass


class NonMonotonicTimestamp(TrackingError):
    pass


class CollinearPoints(TrackingError):
    pass


class ZeroTimeSpan(TrackingError):
    pass


class TableStationary(TrackingError):
    pass


class DimensionMismatch(TrackingError):
    pass


class RoiOutOfBounds(TrackingError):
    pass


# --- 2D detections and IoU --------------------------------------------------

@dataclass(frozen=True)
class Detection2D:
    """Axis-aligned box (centre, size) with a confidence score at time t."""

    t: float
    cx: float
    cy: float
    w: float
    h: float
    score: float = 1.0

    def __post_init__(self):
        if self.w <= 0.0 or self.h <= 0.0:
            raise ValueError(f"box size must be positive, got {self.w} x {self.h}")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score outside [0, 1]: {self.score}")

    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0,
                self.cx + self.w / 2.0, self.cy + self.h / 2.0)


def iou(a, b) -> float:
    """Intersection over union of two (x1, y1, x2, y2) boxes, in [0, 1]."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


# --- Hungarian assignment ---------------------------------------------------

def _solve_square(cost: np.ndarray) -> float:
    """Optimal total of a square min-cost perfect assignment (potentials method)."""
    n = cost.shape[0]
    if n == 0:
        return 0.0
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    match = [0] * (n + 1)      # match[j] = row assigned to column j (1-based)
    for i in range(1, n + 1):
        links = [0] * (n + 1)
        mins = [math.inf] * (n + 1)
        used = [False] * (n + 1)
        match[0] = i
        j0 = 0
        while True:
            used[j0] = True
            i0 = match[j0]
            delta = math.inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < mins[j]:
                    mins[j] = cur
                    links[j] = j0
                if mins[j] < delta:
                    delta = mins[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    mins[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = links[j0]
            match[j0] = match[j1]
            j0 = j1
    total = 0.0
    for j in range(1, n + 1):
        total += cost[match[j] - 1][j - 1]
    return total


def hungarian(cost) -> dict[int, int]:
    """Minimum-total-cost maximum assignment of rows to columns.

    Rectangular matrices yield a partial assignment of size min(rows, cols).
    Among optimal assignments the result is deterministic: rows are fixed in
    ascending order, each to the smallest column index that still permits an
    optimal completion.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2D matrix")
    rows, cols = cost.shape
    if rows == 0 or cols == 0:
        return {}
    if not np.isfinite(cost).all():
        raise ValueError("cost entries must be finite")
    n = max(rows, cols)
    square = np.zeros((n, n))
    square[:rows, :cols] = cost
    total = _solve_square(square)
    tol = 1e-9 * (1.0 + abs(total))
    free_cols = list(range(n))
    fixed = 0.0
    out: dict[int, int] = {}
    for r in range(rows):
        rest_rows = [i for i in range(r + 1, n)]
        # real columns first, then padding columns
        for c in sorted(free_cols, key=lambda j: (j >= cols, j)):
            rest_cols = [j for j in free_cols if j != c]
            sub = square[np.ix_(rest_rows, rest_cols)]
            if fixed + square[r, c] + _solve_square(sub) <= total + tol:
                fixed += square[r, c]
                free_cols.remove(c)
                if c < cols:
                    out[r] = c
                break
    return out


# --- SORT-style Kalman tracking ---------------------------------------------

@dataclass
class SortConfig:
    """Tracker tuning; noise defaults are in pixel units per frame."""

    iou_min: float = 0.3
    max_age: int = 5
    min_hits: int = 3
    dt: float = 1.0 / 15.0
    q_pos: float = 1.0
    q_vel: float = 10.0
    r_meas: float = 1.0
    p0_pos: float = 10.0
    p0_vel: float = 1000.0


_H = np.zeros((4, 7))
_H[0, 0] = _H[1, 1] = _H[2, 2] = _H[3, 3] = 1.0


def _f_matrix(dt: float) -> np.ndarray:
    f = np.eye(7)
    f[0, 4] = f[1, 5] = f[2, 6] = dt
    return f


def _measurement(det: Detection2D) -> np.ndarray:
    return np.array([det.cx, det.cy, det.w * det.h, det.w / det.h])


def _state_box(state: np.ndarray) -> tuple[float, float, float, float]:
    s = max(float(state[2]), 1e-9)
    r = max(float(state[3]), 1e-9)
    w = math.sqrt(s * r)
    h = math.sqrt(s / r)
    cx, cy = float(state[0]), float(state[1])
    return (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


@dataclass
class Track2D:
    """State [u, v, s, r, du, dv, ds]: box centre, area, aspect and their rates."""

    id: int
    state: np.ndarray
    cov: np.ndarray
    hits: int = 1
    age_since_update: int = 0

    def predicted_box(self) -> tuple[float, float, float, float]:
        return _state_box(self.state)


def kalman_predict(track: Track2D, cfg: SortConfig) -> None:
    f = _f_matrix(cfg.dt)
    if track.state[2] + track.state[6] * cfg.dt <= 0.0:
        track.state[6] = 0.0
    track.state = f @ track.state
    q = np.diag([cfg.q_pos] * 4 + [cfg.q_vel] * 3)
    track.cov = f @ track.cov @ f.T + q


def kalman_update(track: Track2D, det: Detection2D, cfg: SortConfig) -> np.ndarray:
    """Measurement update; returns the innovation vector."""
    z = _measurement(det)
    innovation = z - _H @ track.state
    r = np.eye(4) * cfg.r_meas
    s = _H @ track.cov @ _H.T + r
    k = track.cov @ _H.T @ np.linalg.inv(s)
    track.state = track.state + k @ innovation
    track.cov = (np.eye(7) - k @ _H) @ track.cov
    return innovation


def _new_track(track_id: int, det: Detection2D, cfg: SortConfig) -> Track2D:
    state = np.zeros(7)
    state[:4] = _measurement(det)
    cov = np.diag([cfg.p0_pos] * 4 + [cfg.p0_vel] * 3)
    return Track2D(id=track_id, state=state, cov=cov)


@dataclass(frozen=True)
class TrackReport:
    track_id: int
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class SortStep:
    confirmed: tuple[TrackReport, ...]
    matches: tuple[tuple[int, int], ...]       # (track id, detection index)
    new_ids: tuple[int, ...]
    removed_ids: tuple[int, ...]


class SortTracker:
    """Detection-to-track association with a constant-velocity Kalman filter.

    Track ids increase monotonically and are never reused; tracks vanish once
    unmatched for more than ``max_age`` steps and are reported only after
    ``min_hits`` associations.
    """

    def __init__(self, cfg: SortConfig | None = None):
        self.cfg = cfg or SortConfig()
        self.tracks: list[Track2D] = []
        self._next_id = 0

    def step(self, detections: list[Detection2D]) -> SortStep:
        cfg = self.cfg
        for tr in self.tracks:
            kalman_predict(tr, cfg)
            tr.age_since_update += 1

        matches: list[tuple[int, int]] = []
        unmatched_dets = set(range(len(detections)))
        if self.tracks and detections:
            ious = np.zeros((len(self.tracks), len(detections)))
            for i, tr in enumerate(self.tracks):
                pbox = tr.predicted_box()
                for j, det in enumerate(detections):
                    ious[i, j] = iou(pbox, det.corners())
            cost = 1.0 - ious
            cost[ious < cfg.iou_min] = 1e6     # forbidden pairs
            assigned = hungarian(cost)
            for ti, dj in sorted(assigned.items()):
                if ious[ti, dj] < cfg.iou_min:
                    continue
                tr = self.tracks[ti]
                kalman_update(tr, detections[dj], cfg)
                tr.hits += 1
                tr.age_since_update = 0
                matches.append((tr.id, dj))
                unmatched_dets.discard(dj)

        new_ids = []
        for dj in sorted(unmatched_dets):
            tr = _new_track(self._next_id, detections[dj], cfg)
            self._next_id += 1
            self.tracks.append(tr)
            new_ids.append(tr.id)
            matches.append((tr.id, dj))

        removed = [tr.id for tr in self.tracks if tr.age_since_update > cfg.max_age]
        self.tracks = [tr for tr in self.tracks
                       if tr.age_since_update <= cfg.max_age]

        confirmed = tuple(TrackReport(tr.id, tr.predicted_box())
                          for tr in self.tracks if tr.hits >= cfg.min_hits)
        return SortStep(confirmed=confirmed, matches=tuple(matches),
                        new_ids=tuple(new_ids), removed_ids=tuple(removed))


# --- 3D nearest-neighbour association ---------------------------------------

@dataclass
class Track3D:
    """A timestamped 3D point history; timestamps strictly increase."""

    id: int
    history: list[tuple[float, np.ndarray]] = field(default_factory=list)

    @property
    def last_t(self) -> float:
        return self.history[-1][0]

    @property
    def last_point(self) -> np.ndarray:
        return self.history[-1][1]

    def append(self, t: float, point) -> None:
        point = np.asarray(point, dtype=float).reshape(3)
        if self.history and t <= self.last_t:
            raise NonMonotonicTimestamp(
                f"track {self.id}: time {t} not after {self.last_t}")
        self.history.append((float(t), point))


@dataclass(frozen=True)
class Association:
    pairs: tuple[tuple[int, int], ...]         # (track index, point index)
    unmatched_tracks: tuple[int, ...]
    unmatched_points: tuple[int, ...]


def associate_nn_3d(tracks: list[Track3D],
                    points: list[tuple[float, np.ndarray]],
                    gate: float) -> Association:
    """Greedy globally-nearest pairing under a distance gate.

    Repeatedly commits the smallest remaining track-point distance while it
    does not exceed the gate (ties broken by track then point index), appends
    matched points to track histories, and reports the leftovers.
    """
    candidates = []
    for ti, tr in enumerate(tracks):
        base = tr.last_point
        for pj, (_, p) in enumerate(points):
            d = float(np.linalg.norm(np.asarray(p, dtype=float) - base))
            if d <= gate:
                candidates.append((d, ti, pj))
    candidates.sort()
    used_t: set[int] = set()
    used_p: set[int] = set()
    pairs = []
    for d, ti, pj in candidates:
        if ti in used_t or pj in used_p:
            continue
        t, p = points[pj]
        tracks[ti].append(t, p)
        pairs.append((ti, pj))
        used_t.add(ti)
        used_p.add(pj)
    unmatched_t = tuple(i for i in range(len(tracks)) if i not in used_t)
    unmatched_p = tuple(j for j in range(len(points)) if j not in used_p)
    return Association(pairs=tuple(pairs), unmatched_tracks=unmatched_t,
                       unmatched_points=unmatched_p)


# --- circular motion --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CircularMotion:
    """theta(t) = phase0 + omega * (t - t_ref) about a fixed centre."""

    center: np.ndarray
    radius: float
    omega: float
    phase0: float
    t_ref: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(2)
        if self.radius <= 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not (-math.pi < self.phase0 <= math.pi):
            raise ValueError(f"phase0 outside (-pi, pi]: {self.phase0}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    def angle_at(self, t: float) -> float:
        return self.phase0 + self.omega * (t - self.t_ref)

    def position_at(self, t: float) -> np.ndarray:
        a = self.angle_at(t)
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])


def fit_circle(points) -> tuple[np.ndarray, float]:
    """Algebraic least-squares circle fit; exact on noiseless circular data."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("circle fit needs an (n >= 3, 2) array")
    x, y = pts[:, 0], pts[:, 1]
    design = np.column_stack([x, y, np.ones_like(x)])
    target = x * x + y * y
    sol, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 3:
        raise CollinearPoints("points are collinear; no unique circle")
    cx, cy = sol[0] / 2.0, sol[1] / 2.0
    r2 = sol[2] + cx * cx + cy * cy
    return np.array([cx, cy]), math.sqrt(max(r2, 0.0))


def estimate_motion(track: Track3D, center_hint=None) -> CircularMotion:
    """Fit a constant-rate circular motion to a track's (x, y) history.

    The angular rate is the least-squares slope of the unwrapped bearing over
    time; phase0 is the fitted bearing at the last timestamp, wrapped to
    (-pi, pi].  When ``center_hint`` is given the centre is taken from it and
    only the radius and phase line are estimated.
    """
    if len(track.history) < 3:
        raise ValueError(f"motion estimation needs >= 3 samples, "
                         f"got {len(track.history)}")
    ts = np.array([t for t, _ in track.history])
    xy = np.array([p[:2] for _, p in track.history])
    span = float(ts[-1] - ts[0])
    if span <= 0.0:
        raise ZeroTimeSpan("track history spans no time")
    if center_hint is None:
        center, radius = fit_circle(xy)
    else:
        center = np.asarray(center_hint, dtype=float).reshape(2)
        radius = float(np.mean(np.linalg.norm(xy - center, axis=1)))
    rel = xy - center
    theta = np.unwrap(np.arctan2(rel[:, 1], rel[:, 0]))
    slope, intercept = np.polyfit(ts, theta, 1)
    t_ref = float(ts[-1])
    phase0 = wrap_angle(float(slope * t_ref + intercept))
    return CircularMotion(center=center, radius=radius, omega=float(slope),
                          phase0=phase0, t_ref=t_ref)


def predict_arrival(motion: CircularMotion, target_angle: float,
                    t_now: float, lead: float = 0.5,
                    omega_min: float = 1e-3) -> float:
    """Earliest time >= t_now + lead at which the motion reaches target_angle.

    The target is interpreted modulo 2*pi in the direction of rotation; a
    nearly stationary table (|omega| <= omega_min) is rejected.
    """
    if lead < 0.0:
        raise ValueError(f"lead must be non-negative, got {lead}")
    if abs(motion.omega) <= omega_min:
        raise TableStationary(
            f"|omega| = {abs(motion.omega):.2e} <= {omega_min:.2e} rad/s")
    t0 = t_now + lead
    current = motion.angle_at(t0)
    if motion.omega > 0.0:
        delta = (target_angle - current) % TWO_PI
    else:
        delta = (current - target_angle) % TWO_PI
    return t0 + delta / abs(motion.omega)


# --- background change detection --------------------------------------------

@dataclass(frozen=True)
class RoiRect:
    """Rectangular region of interest in grid cells: top-left corner plus size."""

    row: int
    col: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("roi must span at least one cell")


def change_trigger(reference, current, roi: RoiRect,
                   delta: float, frac: float) -> bool:
    """True when strictly more than ``frac`` of ROI cells moved by more than ``delta``."""
    ref = np.asarray(reference, dtype=float)
    cur = np.asarray(current, dtype=float)
    if ref.ndim != 2 or ref.shape != cur.shape:
        raise DimensionMismatch(
            f"grid shapes differ: {ref.shape} vs {cur.shape}")
    rows, cols = ref.shape
    if (roi.row < 0 or roi.col < 0 or roi.row + roi.height > rows
            or roi.col + roi.width > cols):
        raise RoiOutOfBounds(f"roi {roi} exceeds grid {ref.shape}")
    r0, r1 = roi.row, roi.row + roi.height
    c0, c1 = roi.col, roi.col + roi.width
    changed = np.abs(cur[r0:r1, c0:c1] - ref[r0:r1, c0:c1]) > delta
    return float(changed.mean()) > frac


# --- stream I/O --------------------------------------------------------------

def load_detections_jsonl(path) -> list[dict]:
    """Detection stream records: t, cx, cy, w, h, score and optional gt_id."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def save_tracks_csv(path, rows: list[tuple[float, int, float, float, float, float]]) -> None:
    """Tracker output rows (t, track_id, cx, cy, w, h)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "track_id", "cx", "cy", "w", "h"])
        for t, tid, cx, cy, w, h in rows:
            writer.writerow([repr(float(t)), tid, repr(float(cx)),
                             repr(float(cy)), repr(float(w)), repr(float(h))])
