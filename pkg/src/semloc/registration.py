"""Rigid fitting of clique correspondences and nearest-neighbor RMSE scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .clique_solver import max_clique
from .consistency_graph import build_graph, candidate_index_arrays
from .core import (
    Association,
    DegenerateGeometryError,
    InsufficientCorrespondencesError,
    NoScoreableObjectsError,
    ObjectMap,
    PipelineConfig,
    RigidTransform,
)

BRUTE_FORCE_BELOW = 64
# relative singular-value floor below which the point spread is treated as a line
_COLLINEAR_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class CandidateRegistration:
    """One submap's registration result.

    ``inliers`` index into the (submap, vehicle window) pair the candidate was
    computed on; ``inlier_ids`` carries the same pairs as object ids so they
    survive re-windowing. ``transform`` is None when the clique was too small
    or degenerate.
    """

    transform: RigidTransform | None
    inliers: tuple[Association, ...]
    inlier_ids: tuple[tuple[int, int], ...]
    rmse: float
    submap_id: int = 0
    certified_exact: bool = True

    @property
    def inlier_count(self) -> int:
        return len(self.inliers)

    @property
    def usable(self) -> bool:
        return self.transform is not None and math.isfinite(self.rmse)


def fit_rigid(correspondences) -> RigidTransform:
    """Least-squares rigid transform taking vehicle points onto reference points.

    ``correspondences`` is a sequence of ``(ref_point, veh_point)`` pairs, or a
    ``(ref_points, veh_points)`` tuple of ``(n, 3)`` arrays. Minimizes
    ``sum ||R q + t - p||^2`` via centroid subtraction and SVD of the
    cross-covariance, with the reflection case corrected so det R = +1.
    """
    if isinstance(correspondences, tuple) and len(correspondences) == 2 and np.ndim(correspondences[0]) == 2:
        p = np.asarray(correspondences[0], dtype=float).reshape(-1, 3)
        q = np.asarray(correspondences[1], dtype=float).reshape(-1, 3)
    else:
        pairs = list(correspondences)
        p = np.array([a for a, _ in pairs], dtype=float).reshape(-1, 3)
        q = np.array([b for _, b in pairs], dtype=float).reshape(-1, 3)
    if p.shape != q.shape:
        raise ValueError("reference and vehicle point arrays differ in shape")
    if p.shape[0] < 3:
        raise InsufficientCorrespondencesError(f"need at least 3 correspondences, got {p.shape[0]}")

    pc = p.mean(axis=0)
    qc = q.mean(axis=0)
    p0 = p - pc
    q0 = q - qc
    for pts in (p0, q0):
        s = np.linalg.svd(pts, compute_uv=False)
        if s[0] == 0.0 or s[1] <= _COLLINEAR_RTOL * s[0]:
            raise DegenerateGeometryError("correspondences are collinear; rotation about the line is unobservable")

    h = q0.T @ p0
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = pc - r @ qc
    return RigidTransform.projected(r, t)


def sum_squared_residuals(t: RigidTransform, ref_points, veh_points) -> float:
    res = t.apply_points(veh_points) - np.asarray(ref_points, dtype=float)
    return float(np.sum(res * res))


class ClassIndex:
    """Per-class nearest-neighbor lookup over a reference map.

    Uses a k-d tree for classes with at least ``BRUTE_FORCE_BELOW`` objects
    and a direct distance scan otherwise.
    """

    def __init__(self, ref_map: ObjectMap):
        self._points: dict[int, np.ndarray] = {}
        self._trees: dict[int, cKDTree] = {}
        for c in np.unique(ref_map.class_ids):
            pts = ref_map.centroids[ref_map.class_ids == c]
            self._points[int(c)] = pts
            if pts.shape[0] >= BRUTE_FORCE_BELOW:
                self._trees[int(c)] = cKDTree(pts)

    def classes(self) -> set[int]:
        return set(self._points)

    def nearest_distances(self, points: np.ndarray, class_id: int) -> np.ndarray:
        tree = self._trees.get(class_id)
        if tree is not None:
            d, _ = tree.query(points, k=1)
            return np.asarray(d, dtype=float)
        ref = self._points[class_id]
        diff = points[:, None, :] - ref[None, :, :]
        return np.sqrt(np.min(np.einsum("ijk,ijk->ij", diff, diff), axis=1))


_index_cache_attr = "_semloc_class_index"


def class_index(ref_map: ObjectMap) -> ClassIndex:
    idx = ref_map.__dict__.get(_index_cache_attr)
    if idx is None:
        idx = ClassIndex(ref_map)
        ref_map.__dict__[_index_cache_attr] = idx
    return idx


def compute_rmse(t: RigidTransform, veh_window: ObjectMap, ref_map: ObjectMap,
                 class_filter=None) -> float:
    """Root mean squared distance from each transformed vehicle object to the
    nearest reference object of the same class.

    Vehicle objects whose class is absent from the reference map (or from
    ``class_filter`` when given) are skipped.
    """
    index = class_index(ref_map)
    allowed = index.classes()
    if class_filter is not None:
        allowed &= {int(c) for c in class_filter}
    moved = t.apply_points(veh_window.centroids)
    total = 0.0
    count = 0
    for c in sorted(allowed):
        mask = veh_window.class_ids == c
        if not mask.any():
            continue
        d = index.nearest_distances(moved[mask], c)
        total += float(np.dot(d, d))
        count += d.shape[0]
    if count == 0:
        raise NoScoreableObjectsError("no vehicle object has a same-class reference object to score against")
    return math.sqrt(total / count)


def register_submap(ref_submap: ObjectMap, veh_window: ObjectMap, cfg: PipelineConfig,
                    prior=None, *, eval_window: ObjectMap | None = None,
                    score_map: ObjectMap | None = None, submap_id: int = 0) -> CandidateRegistration:
    """Associate, build the consistency graph, take its maximum clique, fit
    the transform and score it.

    ``eval_window`` is the vehicle map the RMSE is computed on (defaults to
    ``veh_window``); ``score_map`` is the reference map used for the
    nearest-neighbor search (defaults to ``ref_submap``).
    """
    eval_window = veh_window if eval_window is None else eval_window
    score_map = ref_submap if score_map is None else score_map
    p, q = candidate_index_arrays(ref_submap, veh_window, prior)
    graph = build_graph((p, q), ref_submap, veh_window, cfg.epsilon)
    clique = max_clique(graph, node_budget=cfg.clique_node_budget, time_budget=cfg.clique_time_budget)
    members = clique.members
    inliers = tuple(Association(int(p[m]), int(q[m])) for m in members)
    inlier_ids = tuple((int(ref_submap.ids[a.ref_index]), int(veh_window.ids[a.veh_index])) for a in inliers)

    def unusable() -> CandidateRegistration:
        return CandidateRegistration(None, inliers, inlier_ids, math.inf, submap_id, clique.certified_exact)

    if len(members) < 3:
        return unusable()
    ref_pts = ref_submap.centroids[[a.ref_index for a in inliers]]
    veh_pts = veh_window.centroids[[a.veh_index for a in inliers]]
    try:
        t = fit_rigid((ref_pts, veh_pts))
        rmse = compute_rmse(t, eval_window, score_map, cfg.class_filter)
    except (DegenerateGeometryError, NoScoreableObjectsError):
        return unusable()
    return CandidateRegistration(t, inliers, inlier_ids, rmse, submap_id, clique.certified_exact)
