"""Candidate associations and the pairwise geometric-consistency graph.

Two associations ``(p_i, q_i)`` and ``(p_j, q_j)`` are consistent when the
reference-side and vehicle-side inter-object distances agree to within
``epsilon``. A maximum clique of this graph is the largest mutually
consistent association set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from numba import njit

from . import bitset
from .core import Association, ObjectMap


@dataclass(frozen=True, eq=False)
class ConsistencyGraph:
    """Vertices are associations sorted by ``(ref_index, veh_index)``;
    ``adjacency`` holds one uint64 bitset row per vertex."""

    ref_indices: np.ndarray
    veh_indices: np.ndarray
    adjacency: np.ndarray

    @property
    def n(self) -> int:
        return int(self.ref_indices.shape[0])

    @cached_property
    def vertices(self) -> tuple[Association, ...]:
        return tuple(Association(int(p), int(q)) for p, q in zip(self.ref_indices, self.veh_indices))

    def has_edge(self, i: int, j: int) -> bool:
        return bool((int(self.adjacency[i, j >> 6]) >> (j & 63)) & 1)

    def neighbors(self, i: int) -> list[int]:
        return bitset.members(self.adjacency[i], self.n)

    def degrees(self) -> np.ndarray:
        return bitset.degrees(self.adjacency)

    def edge_count(self) -> int:
        return int(self.degrees().sum()) // 2

    def dense(self) -> np.ndarray:
        return bitset.to_dense(self.adjacency, self.n)


def _normalize_prior(prior) -> list[tuple[int, int]]:
    if prior is None:
        return []
    out = []
    for a in prior:
        if isinstance(a, Association):
            out.append((a.ref_index, a.veh_index))
        else:
            out.append((int(a[0]), int(a[1])))
    return out


def build_candidate_associations(ref_map: ObjectMap, veh_map: ObjectMap,
                                 prior: Iterable[Association] | None = None) -> list[Association]:
    """All same-class pairs, sorted by ``(ref_index, veh_index)``.

    With a ``prior``, every object taking part in a prior association is
    paired only with its prior partner; the remaining objects are still
    paired all-to-all within class. Prior pairs whose classes disagree are
    dropped.
    """
    p, q = candidate_index_arrays(ref_map, veh_map, prior)
    return [Association(int(a), int(b)) for a, b in zip(p, q)]


def candidate_index_arrays(ref_map: ObjectMap, veh_map: ObjectMap, prior=None) -> tuple[np.ndarray, np.ndarray]:
    ref_free = np.ones(len(ref_map), dtype=bool)
    veh_free = np.ones(len(veh_map), dtype=bool)
    fixed_p, fixed_q = [], []
    for a, b in _normalize_prior(prior):
        if not (0 <= a < len(ref_map) and 0 <= b < len(veh_map)):
            raise IndexError(f"prior association ({a}, {b}) out of range")
        ref_free[a] = False
        veh_free[b] = False
        if ref_map.class_ids[a] == veh_map.class_ids[b]:
            fixed_p.append(a)
            fixed_q.append(b)

    ps = [np.asarray(fixed_p, dtype=np.int64)]
    qs = [np.asarray(fixed_q, dtype=np.int64)]
    rc, vc = ref_map.class_ids, veh_map.class_ids
    for c in np.intersect1d(rc[ref_free], vc[veh_free]):
        ri = np.flatnonzero(ref_free & (rc == c))
        vi = np.flatnonzero(veh_free & (vc == c))
        ps.append(np.repeat(ri, vi.shape[0]))
        qs.append(np.tile(vi, ri.shape[0]))
    p = np.concatenate(ps)
    q = np.concatenate(qs)
    # dedupe a prior that repeats a pair, then sort (ref, veh)
    key = np.unique(p * max(len(veh_map), 1) + q)
    return key // max(len(veh_map), 1), key % max(len(veh_map), 1)


def pairwise_consistency(a_i: Association, a_j: Association, ref_map: ObjectMap, veh_map: ObjectMap) -> float:
    """``| ||p_i - p_j|| - ||q_i - q_j|| |`` in meters."""
    dp = np.linalg.norm(ref_map.centroids[a_i.ref_index] - ref_map.centroids[a_j.ref_index])
    dq = np.linalg.norm(veh_map.centroids[a_i.veh_index] - veh_map.centroids[a_j.veh_index])
    return float(abs(dp - dq))


@njit(cache=True, nogil=True)
def _consistency_bitsets(p, q, dref, dveh, epsilon):
    n = p.shape[0]
    nw = (n + 63) >> 6
    adj = np.zeros((n, nw), np.uint64)
    one = np.uint64(1)
    for i in range(n):
        a = p[i]
        b = q[i]
        wi = i >> 6
        bi = one << np.uint64(i & 63)
        for j in range(i + 1, n):
            c = p[j]
            d = q[j]
            if a == c or b == d:
                continue
            if abs(dref[a, c] - dveh[b, d]) < epsilon:
                adj[i, j >> 6] |= one << np.uint64(j & 63)
                adj[j, wi] |= bi
    return adj


def build_graph(associations, ref_map: ObjectMap, veh_map: ObjectMap, epsilon: float) -> ConsistencyGraph:
    """Consistency graph over ``associations``.

    Edge iff the distance discrepancy is strictly below ``epsilon`` and the
    two associations share neither their reference nor their vehicle object
    (a one-to-one matching can never contain both).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if isinstance(associations, tuple) and len(associations) == 2 and isinstance(associations[0], np.ndarray):
        p, q = associations
    else:
        pairs = sorted(_normalize_prior(associations))
        p = np.array([a for a, _ in pairs], dtype=np.int64)
        q = np.array([b for _, b in pairs], dtype=np.int64)
    p = np.ascontiguousarray(p, dtype=np.int64)
    q = np.ascontiguousarray(q, dtype=np.int64)
    if p.shape[0] == 0:
        adj = np.zeros((0, 0), np.uint64)
    else:
        adj = _consistency_bitsets(p, q, ref_map.pairwise_distances, veh_map.pairwise_distances, float(epsilon))
    for a in (p, q, adj):
        a.flags.writeable = False
    return ConsistencyGraph(p, q, adj)
