"""Seeded scenario generator: reference map, vehicle observation stream,
drifting odometry and exact ground truth.

Frames:
    * reference (global) frame: where the reference map lives;
    * body frame: observations are relative to the vehicle's true pose;
    * odometry frame: where odometry poses live. With ``random_frame`` it is
      an arbitrary SE(3) frame, otherwise it coincides with the first true
      pose.

The true alignment at step ``t`` is ``G_t ∘ O_t⁻¹`` (true pose composed with
inverse odometry pose); with zero drift it is constant.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .core import (
    FRAME_REFERENCE,
    FRAME_VEHICLE,
    ObjectMap,
    RigidTransform,
    SemlocError,
    compose,
    inverse,
    rot_z,
)

VIEWPOINT_MODES = ("same", "reversed", "aerial-jitter")
NAMED_TRAJECTORIES = ("loop", "out_and_back", "grid")
# heading bias, in rad per meter traveled, per unit of drift_rate
HEADING_BIAS_PER_DRIFT = 0.01
CLUTTER_CLEARANCE = 2.0


class ScenarioValidationError(SemlocError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything that defines a scenario; ``seed`` fixes every random draw.

    ``corridor_width`` (when set) keeps reference objects and clutter within
    that distance of the trajectory, like parked cars along a road.
    ``min_separation`` is the minimum distance between any two generated
    objects. ``outlier_fraction`` is the expected share of clutter among the
    objects a vehicle observes.
    """

    seed: int = 0
    ref_object_count: int = 200
    area: tuple[float, float] = (400.0, 200.0)
    class_distribution: tuple[float, ...] = (0.5, 0.3, 0.2)
    trajectory: str | tuple = "loop"
    step_length: float = 5.0
    sensor_range: float = 30.0
    sensor_fov: float = 360.0
    centroid_noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    missing_fraction: float = 0.0
    drift_rate: float = 0.0
    viewpoint_mode: str = "same"
    corridor_width: float | None = None
    min_separation: float = 3.0
    object_height: float = 2.0
    random_frame: bool = False
    max_steps: int | None = None
    class_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if not isinstance(self.trajectory, str):
            object.__setattr__(self, "trajectory", tuple(tuple(float(c) for c in p) for p in self.trajectory))
        object.__setattr__(self, "area", tuple(float(a) for a in self.area))
        object.__setattr__(self, "class_distribution", tuple(float(w) for w in self.class_distribution))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))
        validate_spec(self)

    def replace(self, **changes) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)

    @property
    def names(self) -> tuple[str, ...]:
        if self.class_names is not None:
            return self.class_names
        return tuple(f"class{i}" for i in range(len(self.class_distribution)))

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
        return d


def validate_spec(spec: ScenarioSpec) -> None:
    problems = []
    for name in ("outlier_fraction", "missing_fraction"):
        v = getattr(spec, name)
        if not 0.0 <= v <= 1.0:
            problems.append(f"{name} must be in [0, 1]")
    if spec.centroid_noise_sigma < 0:
        problems.append("centroid_noise_sigma must be >= 0")
    if spec.drift_rate < 0:
        problems.append("drift_rate must be >= 0")
    if spec.ref_object_count < 0:
        problems.append("ref_object_count must be >= 0")
    if len(spec.area) != 2 or min(spec.area) <= 0:
        problems.append("area must be two positive lengths")
    w = spec.class_distribution
    if not w or min(w) < 0 or sum(w) <= 0:
        problems.append("class_distribution must be non-negative weights with a positive sum")
    if spec.class_names is not None and len(spec.class_names) != len(w):
        problems.append("class_names must match class_distribution in length")
    if spec.step_length <= 0 or spec.sensor_range <= 0:
        problems.append("step_length and sensor_range must be positive")
    if not 0 < spec.sensor_fov <= 360:
        problems.append("sensor_fov must be in (0, 360]")
    if spec.viewpoint_mode not in VIEWPOINT_MODES:
        problems.append(f"viewpoint_mode must be one of {VIEWPOINT_MODES}")
    if isinstance(spec.trajectory, str):
        if spec.trajectory not in NAMED_TRAJECTORIES:
            problems.append(f"trajectory must be a waypoint list or one of {NAMED_TRAJECTORIES}")
    elif len(spec.trajectory) < 2 or any(len(p) != 2 for p in spec.trajectory):
        problems.append("waypoint trajectory needs at least two (x, y) points")
    if spec.viewpoint_mode == "reversed" and spec.trajectory != "out_and_back":
        problems.append("viewpoint_mode 'reversed' requires the out_and_back trajectory")
    if spec.corridor_width is not None and spec.corridor_width <= 0:
        problems.append("corridor_width must be positive")
    if spec.min_separation < 0:
        problems.append("min_separation must be >= 0")
    if spec.max_steps is not None and spec.max_steps < 1:
        problems.append("max_steps must be >= 1")
    if problems:
        raise ScenarioValidationError("invalid scenario: " + "; ".join(problems))


@dataclass(frozen=True, eq=False)
class ScenarioRun:
    """A generated scenario. Observation batches carry world object ids;
    ids ``>= n_true`` are clutter (outliers with no reference counterpart)."""

    spec: ScenarioSpec
    reference_map: ObjectMap
    timestamps: np.ndarray
    observation_batches: tuple[ObjectMap, ...]
    odometry: tuple[RigidTransform, ...]
    ground_truth_poses: tuple[RigidTransform, ...]
    ground_truth_alignment: tuple[RigidTransform, ...]
    n_true: int

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def true_distance(self) -> np.ndarray:
        """Cumulative true distance traveled at each step."""
        pos = np.array([g.translation for g in self.ground_truth_poses])
        steps = np.linalg.norm(np.diff(pos, axis=0), axis=1) if len(pos) > 1 else np.zeros(0)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def is_outlier(self, world_id: int) -> bool:
        return world_id >= self.n_true


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------


def _resample(points: np.ndarray, step: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(2, int(math.floor(s[-1] / step)) + 1)
    targets = np.arange(n) * step
    x = np.interp(targets, s, points[:, 0])
    y = np.interp(targets, s, points[:, 1])
    return np.c_[x, y]


def trajectory_waypoints(spec: ScenarioSpec) -> np.ndarray:
    """Dense 2D polyline describing the named pattern (or the given waypoints)."""
    W, H = spec.area
    margin = min(spec.sensor_range / 2.0, 0.1 * min(W, H))
    if not isinstance(spec.trajectory, str):
        return np.asarray(spec.trajectory, dtype=float)
    if spec.trajectory == "loop":
        a, b = W / 2 - margin, H / 2 - margin
        th = np.linspace(0.0, 2 * math.pi, 721)
        return np.c_[W / 2 + a * np.cos(th), H / 2 + b * np.sin(th)]
    if spec.trajectory == "out_and_back":
        x = np.linspace(margin, W - margin, 400)
        amp = 0.25 * (H - 2 * margin)
        y = H / 2 + amp * np.sin(2 * math.pi * (x - margin) / max(W - 2 * margin, 1e-9))
        out = np.c_[x, y]
        return np.vstack([out, out[-2::-1]])
    # grid: lawnmower rows
    spacing = max(1.6 * spec.sensor_range, spec.step_length)
    rows = np.arange(margin, H - margin + 1e-9, spacing)
    pts = []
    for k, y in enumerate(rows):
        xs = (margin, W - margin) if k % 2 == 0 else (W - margin, margin)
        pts += [(xs[0], y), (xs[1], y)]
    return np.asarray(pts, dtype=float)


def _true_poses(spec: ScenarioSpec) -> tuple[np.ndarray, np.ndarray]:
    """Positions (n, 2) and headings (n,) sampled every ``step_length``."""
    pts = _resample(trajectory_waypoints(spec), spec.step_length)
    if spec.max_steps is not None:
        pts = pts[: spec.max_steps]
    d = np.diff(pts, axis=0)
    yaw = np.arctan2(d[:, 1], d[:, 0]) if len(d) else np.zeros(0)
    yaw = np.concatenate([yaw, yaw[-1:]]) if len(yaw) else np.zeros(len(pts))
    return pts, yaw


def _pose(xy, yaw) -> RigidTransform:
    return RigidTransform(rot_z(float(yaw)), [float(xy[0]), float(xy[1]), 0.0])


# --------------------------------------------------------------------------
# object placement
# --------------------------------------------------------------------------


def _distance_to_path(points: np.ndarray, path: np.ndarray) -> np.ndarray:
    a = path[:-1]
    b = path[1:]
    ab = b - a
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-12)
    best = np.full(points.shape[0], np.inf)
    for start in range(0, len(a), 256):
        aa, bb, dd = a[start:start + 256], ab[start:start + 256], denom[start:start + 256]
        t = np.clip(np.einsum("pkj,kj->pk", points[:, None, :] - aa[None], bb) / dd, 0.0, 1.0)
        proj = aa[None] + t[..., None] * bb[None]
        d = np.linalg.norm(points[:, None, :] - proj, axis=2).min(axis=1)
        best = np.minimum(best, d)
    return best


def _place_objects(rng: np.random.Generator, count: int, spec: ScenarioSpec, path: np.ndarray,
                   existing: np.ndarray, separation: float) -> np.ndarray:
    """Rejection-sample ``count`` 2D points over the area (or corridor) keeping
    ``separation`` from each other and from ``existing``."""
    W, H = spec.area
    placed = existing.reshape(-1, 2)
    out = np.zeros((0, 2))
    drawn = 0
    max_drawn = 200 * max(count, 1) + 1000
    while out.shape[0] < count:
        if drawn > max_drawn:
            raise ScenarioValidationError(
                f"could not place {count} objects {separation} m apart; "
                "enlarge the area/corridor or reduce the count"
            )
        batch = rng.uniform([0.0, 0.0], [W, H], size=(512, 2))
        drawn += batch.shape[0]
        if spec.corridor_width is not None:
            batch = batch[_distance_to_path(batch, path) <= spec.corridor_width]
        if placed.shape[0] and separation > 0:
            d, _ = cKDTree(placed).query(batch, k=1)
            batch = batch[d >= separation]
        kept = []
        for i, q in enumerate(batch):
            if all(np.sum((batch[j] - q) ** 2) >= separation ** 2 for j in kept):
                kept.append(i)
                if out.shape[0] + len(kept) == count:
                    break
        out = np.vstack([out, batch[kept]])
        placed = np.vstack([placed, batch[kept]])
    return out


def _random_se3(rng: np.random.Generator, scale: float) -> RigidTransform:
    r = Rotation.random(random_state=np.random.RandomState(rng.integers(2**31))).as_matrix()
    return RigidTransform.projected(r, rng.uniform(-scale, scale, size=3))


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------


def generate(spec: ScenarioSpec) -> ScenarioRun:
    """Deterministically build the scenario described by ``spec``."""
    validate_spec(spec)
    rng = np.random.default_rng(spec.seed)
    xy, yaw = _true_poses(spec)
    path = trajectory_waypoints(spec)
    weights = np.asarray(spec.class_distribution) / sum(spec.class_distribution)

    true_xy = _place_objects(rng, spec.ref_object_count, spec, path, np.zeros((0, 2)), spec.min_separation)
    n_true = true_xy.shape[0]
    f = spec.outlier_fraction
    n_clutter = n_true if f >= 1.0 else int(round(n_true * f / (1.0 - f)))
    # clutter never lands within fusion distance of a true object
    clutter_xy = _place_objects(rng, n_clutter, spec, path, true_xy, max(spec.min_separation, CLUTTER_CLEARANCE))
    world_xy = np.vstack([true_xy, clutter_xy])
    n_world = world_xy.shape[0]
    world = np.c_[world_xy, rng.uniform(0.0, spec.object_height, size=n_world)]
    world_cls = rng.choice(len(weights), size=n_world, p=weights).astype(np.int64)
    world_ids = np.arange(n_world, dtype=np.int64)
    visible_true = f < 1.0

    sigma = spec.centroid_noise_sigma
    half_fov = math.radians(spec.sensor_fov) / 2.0
    poses = [_pose(p, a) for p, a in zip(xy, yaw)]

    def observe(pose: RigidTransform, candidates: np.ndarray) -> ObjectMap:
        body = inverse(pose).apply_points(world[candidates])
        rng_ = np.hypot(body[:, 0], body[:, 1])
        keep = rng_ <= spec.sensor_range
        if spec.sensor_fov < 360.0:
            keep &= np.abs(np.arctan2(body[:, 1], body[:, 0])) <= half_fov
        drop = rng.random(candidates.shape[0]) < spec.missing_fraction
        keep &= ~drop
        idx = candidates[keep]
        pts = body[keep]
        if sigma > 0:
            pts = pts + rng.normal(0.0, sigma, size=pts.shape)
        perm = rng.permutation(idx.shape[0])
        return ObjectMap(pts[perm], world_cls[idx][perm], world_ids[idx][perm], frame=FRAME_VEHICLE)

    all_objects = np.arange(n_world) if visible_true else np.arange(n_true, n_world)
    true_only = np.arange(n_true)

    if spec.viewpoint_mode == "reversed":
        half = len(poses) // 2
        mapping_poses, drive = poses[: half + 1], range(half, len(poses))
        seen = np.zeros(n_true, dtype=bool)
        for pose in mapping_poses:
            obs = observe(pose, true_only)
            seen[obs.ids] = True
        ref_idx = np.flatnonzero(seen)
        ref_pts = world[ref_idx] + (rng.normal(0.0, sigma, size=(ref_idx.shape[0], 3)) if sigma > 0 else 0.0)
    else:
        drive = range(len(poses))
        ref_idx = true_only
        ref_pts = world[ref_idx].copy()
        if spec.viewpoint_mode == "aerial-jitter" and sigma > 0:
            ref_pts = ref_pts + rng.normal(0.0, sigma, size=ref_pts.shape)
    reference_map = ObjectMap(ref_pts, world_cls[ref_idx], world_ids[ref_idx], frame=FRAME_REFERENCE)

    drive = list(drive)
    g = [poses[k] for k in drive]
    if spec.random_frame:
        extent = max(spec.area)
        align0 = _random_se3(rng, extent)
    else:
        align0 = g[0]
    odom = [compose(inverse(align0), g[0])]
    bias = HEADING_BIAS_PER_DRIFT * spec.drift_rate * (1.0 if rng.random() < 0.5 else -1.0)
    for k in range(1, len(g)):
        rel = compose(inverse(g[k - 1]), g[k])
        if spec.drift_rate > 0:
            step = float(np.linalg.norm(rel.translation))
            scale = 1.0 + rng.normal(0.0, spec.drift_rate)
            rel = RigidTransform(rot_z(bias * step) @ rel.rotation, rel.translation * scale)
        odom.append(compose(odom[-1], rel))
    alignment = [compose(gk, inverse(ok)) for gk, ok in zip(g, odom)]
    batches = tuple(observe(pose, all_objects) for pose in g)

    return ScenarioRun(
        spec=spec,
        reference_map=reference_map,
        timestamps=np.arange(len(g), dtype=float),
        observation_batches=batches,
        odometry=tuple(odom),
        ground_truth_poses=tuple(g),
        ground_truth_alignment=tuple(alignment),
        n_true=n_true,
    )
