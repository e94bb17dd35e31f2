"""Vehicle map bookkeeping (fusion, recency window) and reference map slicing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FRAME_VEHICLE, ObjectMap, RigidTransform, SemanticObject, apply_transform


@dataclass
class VehicleMapState:
    """Growing vehicle map in the odometry frame.

    Objects are kept in recency order (oldest first); ``counts`` holds the
    number of observations fused into each object. Owned and mutated by one
    ingestion loop; readers take :meth:`snapshot` copies.
    """

    centroids: list[np.ndarray] = field(default_factory=list)
    class_ids: list[int] = field(default_factory=list)
    ids: list[int] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    odometry_trail: list[tuple[float, RigidTransform]] = field(default_factory=list)
    distance_traveled: float = 0.0
    next_id: int = 0

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def full_map(self) -> ObjectMap:
        return self.snapshot()

    def snapshot(self) -> ObjectMap:
        if not self.ids:
            return ObjectMap.empty(FRAME_VEHICLE)
        return ObjectMap(np.array(self.centroids), self.class_ids, self.ids, frame=FRAME_VEHICLE)

    def record_pose(self, timestamp: float, pose: RigidTransform) -> None:
        """Append an odometry pose and accumulate the step length."""
        if self.odometry_trail:
            prev = self.odometry_trail[-1][1]
            self.distance_traveled += float(np.linalg.norm(pose.translation - prev.translation))
        self.odometry_trail.append((float(timestamp), pose))


def fuse_observations(state: VehicleMapState, new_objects, fusion_radius: float) -> VehicleMapState:
    """Merge a batch of observations (already in the vehicle frame) into ``state``.

    Each new object is matched against the objects that existed before the
    batch: the nearest same-class object within ``fusion_radius`` absorbs it
    (count-weighted running mean of the centroid) and moves to the newest
    end of the recency order. Unmatched objects are appended with fresh ids.
    Distance ties go to the most recently seen object. Mutates and returns
    ``state``.
    """
    batch = [o if isinstance(o, SemanticObject) else SemanticObject(*o) for o in new_objects]
    if not batch:
        return state
    n_old = len(state.ids)
    old_pts = np.array(state.centroids).reshape(-1, 3)
    old_cls = np.array(state.class_ids, dtype=np.int64)
    targets: list[int | None] = []
    for obj in batch:
        u = np.asarray(obj.centroid)
        match = None
        if n_old:
            d = np.linalg.norm(old_pts - u, axis=1)
            ok = (old_cls == obj.class_id) & (d <= fusion_radius)
            if ok.any():
                cand = np.flatnonzero(ok)
                dmin = d[cand].min()
                match = int(cand[d[cand] == dmin].max())
        targets.append(match)

    touched: list[int] = []
    for obj, k in zip(batch, targets):
        if k is None:
            continue
        c = state.counts[k]
        state.centroids[k] = (state.centroids[k] * c + np.asarray(obj.centroid)) / (c + 1)
        state.counts[k] = c + 1
        if k not in touched:
            touched.append(k)

    if touched:
        # move fused objects to the newest end, keeping their relative order
        moved = set(touched)
        keep = [i for i in range(n_old) if i not in moved] + touched
        for name in ("centroids", "class_ids", "ids", "counts"):
            col = getattr(state, name)
            setattr(state, name, [col[i] for i in keep])

    for obj, k in zip(batch, targets):
        if k is not None:
            continue
        state.centroids.append(np.array(obj.centroid, dtype=float))
        state.class_ids.append(obj.class_id)
        state.ids.append(state.next_id)
        state.counts.append(1)
        state.next_id += 1
    return state


def recent_window(state, r) -> ObjectMap:
    """The ``r`` most recently seen objects (whole map if ``r`` is inf or
    exceeds the map size), oldest first."""
    m = state.snapshot() if isinstance(state, VehicleMapState) else state
    if r is None or (isinstance(r, float) and math.isinf(r)) or r >= len(m):
        return m
    if r < 1:
        raise ValueError("window size must be >= 1")
    r = int(r)
    return m.subset(np.arange(len(m) - r, len(m)))


def split_submaps(ref_map: ObjectMap, k: int, overlap_fraction: float = 0.0) -> list[ObjectMap]:
    """Slice the map into ``k`` bands along its longest bounding-box axis.

    Band ``i`` covers ``[lo + i*w, lo + (i+1)*w)`` (last band closed), widened
    by ``overlap_fraction * w`` across each interior border.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1 or len(ref_map) == 0:
        return [ref_map]
    pts = ref_map.centroids
    extent = pts.max(axis=0) - pts.min(axis=0)
    axis = int(np.argmax(extent))
    x = pts[:, axis]
    lo, hi = float(x.min()), float(x.max())
    w = (hi - lo) / k
    if w == 0.0:
        return [ref_map] + [ref_map.subset([]) for _ in range(k - 1)]
    pad = overlap_fraction * w
    out = []
    for i in range(k):
        a = lo + i * w
        b = lo + (i + 1) * w
        lower_ok = x >= (a - pad) if i > 0 else np.ones_like(x, dtype=bool)
        if i == k - 1:
            upper_ok = np.ones_like(x, dtype=bool)
        else:
            upper_ok = x < b + pad
        out.append(ref_map.subset(np.flatnonzero(lower_ok & upper_ok)))
    return out


def restrict_reference(ref_map: ObjectMap, t_cur: RigidTransform, veh_window: ObjectMap,
                       margin: float) -> ObjectMap:
    """Reference objects inside the bounding box of the ``t_cur``-transformed
    vehicle window grown by ``margin`` on every side."""
    if math.isinf(margin):
        return ref_map
    if len(veh_window) == 0 or len(ref_map) == 0:
        return ref_map.subset([])
    moved = apply_transform(t_cur, veh_window).centroids
    lo = moved.min(axis=0) - margin
    hi = moved.max(axis=0) + margin
    inside = np.all((ref_map.centroids >= lo) & (ref_map.centroids <= hi), axis=1)
    return ref_map.subset(np.flatnonzero(inside))
