"""Domain types and SE(3) helpers shared by the whole pipeline.

Transform convention: a :class:`RigidTransform` ``T = (R, t)`` maps a point
``u`` expressed in the source frame to ``R @ u + t`` in the target frame.
For map alignment the source is the vehicle (odometry) frame and the target
is the reference frame.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

ROTATION_TOL = 1e-9

FRAME_VEHICLE = "vehicle"
FRAME_REFERENCE = "reference"


class SemlocError(Exception):
    """Base class for all errors raised by this package."""


class InsufficientCorrespondencesError(SemlocError):
    pass


class DegenerateGeometryError(SemlocError):
    pass


class NoScoreableObjectsError(SemlocError):
    pass


class NotLocalizedError(SemlocError):
    pass


# --------------------------------------------------------------------------
# Objects and maps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SemanticObject:
    """A 3D centroid tagged with a semantic class."""

    centroid: tuple[float, float, float]
    class_id: int
    id: int

    def __post_init__(self):
        c = tuple(float(v) for v in self.centroid)
        if len(c) != 3:
            raise ValueError(f"centroid must have 3 components, got {len(c)}")
        if not all(math.isfinite(v) for v in c):
            raise ValueError(f"object {self.id}: non-finite centroid {c}")
        if int(self.class_id) != self.class_id or self.class_id < 0:
            raise ValueError(f"object {self.id}: class_id must be a non-negative integer")
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "id", int(self.id))


class ObjectMap:
    """Ordered, immutable collection of semantic objects in one frame.

    Stored column-wise (``centroids``, ``class_ids``, ``ids``) because every
    consumer works on whole arrays. Order is insertion/recency order.
    """

    def __init__(self, centroids, class_ids, ids=None, frame: str = FRAME_VEHICLE,
                 classes: Iterable[int] | None = None):
        centroids = np.array(centroids, dtype=float).reshape(-1, 3)
        class_ids = np.array(class_ids, dtype=np.int64).reshape(-1)
        n = centroids.shape[0]
        ids = np.arange(n, dtype=np.int64) if ids is None else np.array(ids, dtype=np.int64).reshape(-1)
        if class_ids.shape[0] != n or ids.shape[0] != n:
            raise ValueError("centroids, class_ids and ids must have equal length")
        if not np.all(np.isfinite(centroids)):
            raise ValueError("centroids must be finite")
        if n and class_ids.min() < 0:
            raise ValueError("class ids must be non-negative")
        if np.unique(ids).shape[0] != n:
            raise ValueError("object ids must be unique within a map")
        if classes is not None:
            allowed = set(int(c) for c in classes)
            bad = set(class_ids.tolist()) - allowed
            if bad:
                raise ValueError(f"class ids {sorted(bad)} not in the configured class set")
        for a in (centroids, class_ids, ids):
            a.flags.writeable = False
        self.centroids = centroids
        self.class_ids = class_ids
        self.ids = ids
        self.frame = frame

    @classmethod
    def from_objects(cls, objects: Iterable[SemanticObject], frame: str = FRAME_VEHICLE) -> "ObjectMap":
        objects = list(objects)
        return cls(
            [o.centroid for o in objects] if objects else np.zeros((0, 3)),
            [o.class_id for o in objects],
            [o.id for o in objects],
            frame=frame,
        )

    @classmethod
    def empty(cls, frame: str = FRAME_VEHICLE) -> "ObjectMap":
        return cls(np.zeros((0, 3)), [], [], frame=frame)

    def __len__(self) -> int:
        return self.centroids.shape[0]

    def __iter__(self):
        return iter(self.objects)

    def __getitem__(self, i: int) -> SemanticObject:
        return SemanticObject(tuple(self.centroids[i]), int(self.class_ids[i]), int(self.ids[i]))

    def __repr__(self) -> str:
        return f"ObjectMap(n={len(self)}, frame={self.frame!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObjectMap):
            return NotImplemented
        return (
            self.frame == other.frame
            and np.array_equal(self.centroids, other.centroids)
            and np.array_equal(self.class_ids, other.class_ids)
            and np.array_equal(self.ids, other.ids)
        )

    __hash__ = None

    @property
    def objects(self) -> tuple[SemanticObject, ...]:
        return tuple(self[i] for i in range(len(self)))

    def subset(self, indices) -> "ObjectMap":
        """Map restricted to ``indices`` (order of ``indices`` is kept)."""
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        return ObjectMap(self.centroids[idx], self.class_ids[idx], self.ids[idx], frame=self.frame)

    def with_centroids(self, centroids, frame: str | None = None) -> "ObjectMap":
        return ObjectMap(centroids, self.class_ids, self.ids, frame=self.frame if frame is None else frame)

    @cached_property
    def index_of_id(self) -> dict[int, int]:
        return {int(i): k for k, i in enumerate(self.ids)}

    @cached_property
    def pairwise_distances(self) -> np.ndarray:
        diff = self.centroids[:, None, :] - self.centroids[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        d.flags.writeable = False
        return d


# --------------------------------------------------------------------------
# Rigid transforms
# --------------------------------------------------------------------------


def rotation_deviation(r: np.ndarray) -> float:
    """Largest violation of the SO(3) conditions (orthonormality, det = +1)."""
    return max(float(np.max(np.abs(r.T @ r - np.eye(3)))), abs(float(np.linalg.det(r)) - 1.0))


def project_to_rotation(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius norm) to ``m``."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        dev = rotation_deviation(r)
        if dev > ROTATION_TOL:
            raise ValueError(f"rotation is not in SO(3) (deviation {dev:.3g})")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def projected(cls, rotation, translation) -> "RigidTransform":
        """Build a transform, snapping ``rotation`` onto SO(3) if it drifted."""
        r = np.asarray(rotation, dtype=float)
        if rotation_deviation(r) > ROTATION_TOL:
            r = project_to_rotation(r)
        return cls(r, translation)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply_points(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return inverse(self)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0)
            and np.allclose(self.translation, other.translation, atol=atol, rtol=0)
        )

    def __repr__(self) -> str:
        t = np.array2string(self.translation, precision=4)
        return f"RigidTransform(yaw={math.degrees(yaw_of(self.rotation)):.3f}deg, t={t})"


def rot_z(angle_rad: float) -> np.ndarray:
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of(rotation: np.ndarray) -> float:
    return math.atan2(rotation[1, 0], rotation[0, 0])


def rotation_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


def apply_transform(t: RigidTransform, m: ObjectMap) -> ObjectMap:
    """Move every centroid of ``m`` by ``t``; classes, ids and order are kept."""
    if len(m) == 0:
        return m
    return m.with_centroids(t.apply_points(m.centroids))


def compose(t1: RigidTransform, t2: RigidTransform) -> RigidTransform:
    """``t1 ∘ t2``: apply ``t2`` first, then ``t1``."""
    return RigidTransform.projected(
        t1.rotation @ t2.rotation, t1.rotation @ t2.translation + t1.translation
    )


def inverse(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform.projected(rt, -rt @ t.translation)


def rotation_angle_deg(r: np.ndarray) -> float:
    """Geodesic angle of rotation ``r`` in degrees, from its trace."""
    c = (float(np.trace(r)) - 1.0) / 2.0
    if c > 1.0 - 1e-12:
        # acos loses precision near 0; use the skew part instead
        s = np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]]) / 2.0
        return math.degrees(math.asin(min(1.0, s)))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def transform_distance(t1: RigidTransform, t2: RigidTransform) -> tuple[float, float]:
    """(translation distance in meters, geodesic rotation angle in degrees)."""
    dt = float(np.linalg.norm(t1.translation - t2.translation))
    return dt, rotation_angle_deg(t1.rotation.T @ t2.rotation)


# --------------------------------------------------------------------------
# Associations
# --------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Association:
    """Index pair linking a reference object to a vehicle object of the same class."""

    ref_index: int
    veh_index: int

    @classmethod
    def checked(cls, ref_map: ObjectMap, veh_map: ObjectMap, ref_index: int, veh_index: int) -> "Association":
        if ref_map.class_ids[ref_index] != veh_map.class_ids[veh_index]:
            raise ValueError(
                f"association ({ref_index}, {veh_index}) links objects of different classes"
            )
        return cls(int(ref_index), int(veh_index))


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """All tunable parameters of the localization pipeline.

    Distances are in meters, angles in degrees. ``r`` / ``r_prime`` accept
    ``math.inf`` meaning "whole vehicle map".
    """

    epsilon: float = 2.5
    tau_in: int = 12
    tau_rmse_base: float = 6.0
    tau_rmse_growth: float = 2.0 / 500.0
    alpha: float = 0.1
    delta: float = 0.25
    r: float = 75
    r_prime: float = 150
    k: int = 4
    submap_overlap_fraction: float = 0.0
    fusion_radius: float = 1.0
    translation_similarity_base: float = 10.0
    rotation_similarity_base: float = 10.0
    translation_similarity_growth: float = 0.01
    rotation_similarity_growth: float = 0.01
    restrict_margin: float = 50.0
    registration_interval: int = 1
    class_filter: tuple[int, ...] | None = None
    clique_node_budget: int | None = 2_000_000
    clique_time_budget: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.class_filter is not None:
            object.__setattr__(self, "class_filter", tuple(sorted(int(c) for c in self.class_filter)))
        problems = []
        if not self.epsilon > 0:
            problems.append("epsilon must be > 0")
        if self.tau_in < 3:
            problems.append("tau_in must be >= 3")
        if not 0 < self.alpha < 1:
            problems.append("alpha must be in (0, 1)")
        if not (self.r_prime >= self.r >= self.tau_in):
            problems.append("need r_prime >= r >= tau_in")
        if self.k < 1:
            problems.append("k must be >= 1")
        if not 0 <= self.submap_overlap_fraction < 1:
            problems.append("submap_overlap_fraction must be in [0, 1)")
        if self.delta < 0 or self.fusion_radius < 0 or self.restrict_margin < 0:
            problems.append("delta, fusion_radius and restrict_margin must be >= 0")
        if self.tau_rmse_base < 0 or self.tau_rmse_growth < 0:
            problems.append("tau_rmse_base and tau_rmse_growth must be >= 0")
        if self.registration_interval < 1 or self.workers < 1:
            problems.append("registration_interval and workers must be >= 1")
        if problems:
            raise ValueError("invalid PipelineConfig: " + "; ".join(problems))

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["class_filter"] is not None:
            d["class_filter"] = list(d["class_filter"])
        return d


PROFILES: dict[str, dict] = {
    # KITTI setup: eps 2.5 m, 12 inliers, last 75 objects, RMSE gate 6 m + 2 m / 500 m, k = 4
    "kitti": dict(epsilon=2.5, tau_in=12, r=75, r_prime=150, tau_rmse_base=6.0,
                  tau_rmse_growth=2.0 / 500.0, alpha=0.1, k=4),
    # Katwijk setup: eps 1.5 m, 8 inliers, RMSE gate 2 m, unrestricted vehicle map
    "katwijk": dict(epsilon=1.5, tau_in=8, r=math.inf, r_prime=math.inf, tau_rmse_base=2.0,
                    tau_rmse_growth=0.0, alpha=0.1, k=1),
    "katwijk-sparse": dict(epsilon=1.5, tau_in=6, r=math.inf, r_prime=math.inf, tau_rmse_base=2.0,
                           tau_rmse_growth=0.0, alpha=0.1, k=1),
}


def profile_config(name: str, **overrides) -> PipelineConfig:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return PipelineConfig(**{**base, **overrides})


def as_points(seq: Sequence) -> np.ndarray:
    return np.asarray(seq, dtype=float).reshape(-1, 3)
