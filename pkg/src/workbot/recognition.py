"""Object pose estimation and 2D/3D recognition-score fusion.

Classifier backends are pluggable: anything that maps a cluster to an
:class:`ObjectScores` can act as a provider.  Only the geometry (PCA pose)
and the fusion rule live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Mapping

import numpy as np

from .cloud import Cluster, DEGENERATE_EIG, PointCloud
from .errors import WorkbotError
from .geometry import Pose

Source = Literal["2d", "3d"]


class RecognitionError(WorkbotError):
    pass


class DegenerateCluster(RecognitionError):
    pass


class NoAdmissibleLabel(RecognitionError):
    pass


@dataclass(frozen=True)
class ObjectScores:
    """Per-label recognition scores in [0, 1] from one source (2d or 3d)."""

    scores: Mapping[str, float]
    source: Source

    def __post_init__(self):
        if self.source not in ("2d", "3d"):
            raise ValueError(f"source must be '2d' or '3d', got {self.source!r}")
        if not self.scores:
            raise ValueError("score map cannot be empty")
        for label, s in self.scores.items():
            if not (math.isfinite(s) and 0.0 <= s <= 1.0):
                raise ValueError(f"score for {label!r} outside [0, 1]: {s}")
        object.__setattr__(self, "scores", dict(self.scores))


@dataclass(frozen=True)
class Inventory:
    """The labels admissible in the current scene."""

    labels: frozenset[str]

    def __post_init__(self):
        if not self.labels:
            raise ValueError("inventory cannot be empty")
        object.__setattr__(self, "labels", frozenset(self.labels))

    @staticmethod
    def of(*labels: str) -> "Inventory":
        return Inventory(frozenset(labels))


@dataclass(frozen=True, eq=False)
class ObjectHypothesis:
    label: str
    confidence: float
    pose: Pose
    extents: np.ndarray

    def __post_init__(self):
        ext = np.asarray(self.extents, dtype=float).reshape(3)
        if np.any(ext < 0.0) or np.any(np.diff(ext) > 1e-12):
            raise ValueError("extents must be non-negative and descending")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")
        ext.setflags(write=False)
        object.__setattr__(self, "extents", ext)


ScoreProvider = Callable[[PointCloud, Cluster], ObjectScores]

NEUTRAL_SCORE = 0.5


def _canonical_axis(a: np.ndarray) -> np.ndarray:
    for c in range(3):
        if a[c] > 0.0:
            return a
        if a[c] < 0.0:
            return -a
    return a


def pca_pose(cloud: PointCloud, cluster: Cluster) -> tuple[Pose, np.ndarray]:
    """Principal-axes pose and sqrt-eigenvalue extents of a cluster.

    Axes are ordered by descending eigenvalue and form a right-handed frame;
    the first two axes are sign-canonicalized toward positive x (ties broken
    on y, then z) and the third is their cross product.
    """
    pts = cloud.points[cluster.indices]
    if pts.shape[0] < 3:
        raise DegenerateCluster(f"pose needs >= 3 points, got {pts.shape[0]}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if evals[1] <= DEGENERATE_EIG:
        raise DegenerateCluster("cluster covariance has rank < 2")
    a1 = _canonical_axis(evecs[:, 0].copy())
    a2 = _canonical_axis(evecs[:, 1].copy())
    a3 = np.cross(a1, a2)
    rot = np.column_stack([a1, a2, a3])
    extents = np.sqrt(np.clip(evals, 0.0, None))
    return Pose.from_rotation(rot, centroid), extents


def fuse(scores3d: ObjectScores, scores2d: ObjectScores,
         inventory: Inventory) -> tuple[str, float]:
    """Product-rule fusion over the inventory labels.

    A label missing from one source contributes a neutral 0.5 there, so a
    single absent detector cannot veto; a label scored by neither source has
    no evidence and fuses to zero.  Labels outside the inventory are masked
    out entirely.  Returns the argmax label (ties go to the lexicographically
    smallest) and its normalized confidence.
    """
    if scores3d.source != "3d" or scores2d.source != "2d":
        raise ValueError("fuse expects a 3d score map and a 2d score map")
    fused = {}
    for label in sorted(inventory.labels):
        if label not in scores3d.scores and label not in scores2d.scores:
            fused[label] = 0.0
            continue
        s3 = scores3d.scores.get(label, NEUTRAL_SCORE)
        s2 = scores2d.scores.get(label, NEUTRAL_SCORE)
        fused[label] = s3 * s2
    total = sum(fused.values())
    if total <= 0.0:
        raise NoAdmissibleLabel("all fused scores are zero over the inventory")
    winner = max(sorted(fused), key=lambda l: fused[l])
    return winner, fused[winner] / total


def neutral_scores(source: Source) -> ObjectScores:
    """A provider output that biases no label (useful when one sensor is absent)."""
    return ObjectScores(scores={"__neutral__": NEUTRAL_SCORE}, source=source)


def build_hypothesis(cloud: PointCloud, cluster: Cluster,
                     scores3d: ObjectScores, scores2d: ObjectScores,
                     inventory: Inventory) -> ObjectHypothesis:
    label, confidence = fuse(scores3d, scores2d, inventory)
    pose, extents = pca_pose(cloud, cluster)
    return ObjectHypothesis(label=label, confidence=confidence,
                            pose=pose, extents=extents)
