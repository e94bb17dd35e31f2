"""Exact maximum clique by branch and bound over bitset adjacency.

Recipe: degeneracy (k-core) ordering, a greedy incumbent, then a search per
root vertex bounded by greedy coloring (MCQ/BBMC style). Once the maximum
size is known, a second ascending-order search returns the lexicographically
smallest maximum clique so results do not depend on the search order.

The hot loops are numba kernels working on ``(n, ceil(n/64))`` uint64 rows.
Budgets: ``node_budget`` counts branch nodes and is deterministic;
``time_budget`` is checked between batches of root vertices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import bitset
from .bitset import lowest_bit, popcount64, row_popcount

_ROOT_BATCH = 128
_NO_LIMIT = np.int64(2**62)


@dataclass(frozen=True)
class CliqueResult:
    members: tuple[int, ...]
    certified_exact: bool
    nodes: int = 0

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True, eq=False)
class BitGraph:
    """Plain undirected graph in bitset form; used for tests and tooling."""

    n: int
    adjacency: np.ndarray

    @classmethod
    def from_dense(cls, mat) -> "BitGraph":
        mat = np.asarray(mat, dtype=bool)
        if np.any(mat != mat.T):
            raise ValueError("adjacency must be symmetric")
        return cls(mat.shape[0], bitset.from_dense(mat))

    @classmethod
    def from_edges(cls, n: int, edges) -> "BitGraph":
        mat = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            if i != j:
                mat[i, j] = mat[j, i] = True
        return cls(n, bitset.from_dense(mat))

    def has_edge(self, i: int, j: int) -> bool:
        return bool((int(self.adjacency[i, j >> 6]) >> (j & 63)) & 1)


def _graph_arrays(g) -> tuple[int, np.ndarray]:
    n = int(g.n)
    adj = g.adjacency
    if n == 0:
        return 0, np.zeros((0, 1), np.uint64)
    return n, np.ascontiguousarray(adj, dtype=np.uint64)


def is_clique(g, members) -> bool:
    members = list(members)
    for a in range(len(members)):
        for b in range(a + 1, len(members)):
            if members[a] == members[b] or not g.has_edge(members[a], members[b]):
                return False
    return True


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _degeneracy(adj):
    """Batagelj-Zaversnik core decomposition.

    Returns (removal order, core number per vertex).
    """
    n, nw = adj.shape
    deg = np.zeros(n, np.int64)
    for v in range(n):
        deg[v] = row_popcount(adj[v], nw)
    # CSR neighbor lists
    start = np.zeros(n + 1, np.int64)
    for v in range(n):
        start[v + 1] = start[v] + deg[v]
    nbr = np.empty(start[n], np.int64)
    for v in range(n):
        k = start[v]
        for w in range(nw):
            x = adj[v, w]
            while x:
                b = lowest_bit(x)
                x &= x - np.uint64(1)
                nbr[k] = (w << 6) + b
                k += 1
    md = 0
    for v in range(n):
        if deg[v] > md:
            md = deg[v]
    bins = np.zeros(md + 1, np.int64)
    for v in range(n):
        bins[deg[v]] += 1
    s = 0
    for d in range(md + 1):
        c = bins[d]
        bins[d] = s
        s += c
    pos = np.empty(n, np.int64)
    vert = np.empty(n, np.int64)
    for v in range(n):
        pos[v] = bins[deg[v]]
        vert[pos[v]] = v
        bins[deg[v]] += 1
    for d in range(md, 0, -1):
        bins[d] = bins[d - 1]
    if md >= 0:
        bins[0] = 0
    for i in range(n):
        v = vert[i]
        for k in range(start[v], start[v + 1]):
            u = nbr[k]
            if deg[u] > deg[v]:
                du = deg[u]
                pu = pos[u]
                pw = bins[du]
                w = vert[pw]
                if u != w:
                    pos[u] = pw
                    vert[pu] = w
                    pos[w] = pu
                    vert[pw] = u
                bins[du] += 1
                deg[u] -= 1
    return vert, deg


@njit(cache=True, nogil=True)
def _relabel(adj, newidx):
    n, nw = adj.shape
    out = np.zeros((n, nw), np.uint64)
    one = np.uint64(1)
    for v in range(n):
        nv = newidx[v]
        for w in range(nw):
            x = adj[v, w]
            while x:
                b = lowest_bit(x)
                x &= x - one
                u = newidx[(w << 6) + b]
                out[nv, u >> 6] |= one << np.uint64(u & 63)
    return out


@njit(cache=True, nogil=True)
def _greedy(adj, core):
    """Greedy incumbent on a graph numbered so that index 0 has the highest core.

    From every root, repeatedly add the lowest-index (highest-core)
    remaining candidate.
    """
    n, nw = adj.shape
    best = 0
    best_members = np.empty(n, np.int64)
    cur = np.empty(n, np.int64)
    P = np.empty(nw, np.uint64)
    for v in range(n):
        if core[v] + 1 <= best:
            continue
        size = 1
        cur[0] = v
        nonempty = False
        for w in range(nw):
            P[w] = adj[v, w]
            if P[w]:
                nonempty = True
        while nonempty:
            u = -1
            for w in range(nw):
                if P[w]:
                    u = (w << 6) + lowest_bit(P[w])
                    break
            cur[size] = u
            size += 1
            nonempty = False
            for w in range(nw):
                P[w] &= adj[u, w]
                if P[w]:
                    nonempty = True
        if size > best:
            best = size
            for k in range(size):
                best_members[k] = cur[k]
    return best, best_members[:best].copy()


@njit(cache=True, nogil=True)
def _color_sort(adj, P, nw, kmin, U, col, Q, R):
    """Greedy coloring of set P; stores vertices with color >= kmin in U
    (ascending color) and returns how many were stored."""
    for w in range(nw):
        Q[w] = P[w]
    k = 0
    cnt = 0
    one = np.uint64(1)
    while True:
        any_q = False
        for w in range(nw):
            R[w] = Q[w]
            if R[w]:
                any_q = True
        if not any_q:
            break
        k += 1
        w = 0
        while w < nw:
            if R[w] == 0:
                w += 1
                continue
            b = lowest_bit(R[w])
            v = (w << 6) + b
            m = ~(one << np.uint64(b))
            R[w] &= m
            Q[w] &= m
            for x in range(w, nw):
                R[x] &= ~adj[v, x]
            if k >= kmin:
                U[cnt] = v
                col[cnt] = k
                cnt += 1
    return cnt


@njit(cache=True, nogil=True)
def _count_colors(adj, P, nw, Q, R):
    for w in range(nw):
        Q[w] = P[w]
    k = 0
    one = np.uint64(1)
    while True:
        any_q = False
        for w in range(nw):
            R[w] = Q[w]
            if R[w]:
                any_q = True
        if not any_q:
            return k
        k += 1
        w = 0
        while w < nw:
            if R[w] == 0:
                w += 1
                continue
            b = lowest_bit(R[w])
            v = (w << 6) + b
            m = ~(one << np.uint64(b))
            R[w] &= m
            Q[w] &= m
            for x in range(w, nw):
                R[x] &= ~adj[v, x]


@njit(cache=True, nogil=True)
def _search_roots(adj, core, root_hi, root_lo, best_arr, best_members, node_limit, nodes_arr):
    """Exact search over roots ``root_hi-1 .. root_lo`` (descending).

    For root ``v`` the candidates are its neighbors with smaller index, so
    every clique is found exactly once, from its largest-index member.
    Returns False if the node budget ran out.
    """
    n, nw_full = adj.shape
    maxc = 0
    for v in range(n):
        if core[v] > maxc:
            maxc = core[v]
    depth_cap = maxc + 2
    Pst = np.zeros((depth_cap, nw_full), np.uint64)
    U = np.zeros((depth_cap, maxc + 1), np.int64)
    col = np.zeros((depth_cap, maxc + 1), np.int64)
    pos = np.zeros(depth_cap, np.int64)
    C = np.zeros(depth_cap + 1, np.int64)
    Q = np.empty(nw_full, np.uint64)
    R = np.empty(nw_full, np.uint64)
    one = np.uint64(1)
    best = best_arr[0]
    nodes = nodes_arr[0]
    for root in range(root_hi - 1, root_lo - 1, -1):
        if core[root] + 1 <= best:
            continue
        nw = (root >> 6) + 1
        # candidates: neighbors with index < root
        cnt_p = 0
        for w in range(nw):
            x = adj[root, w]
            if w == (root >> 6):
                x &= (one << np.uint64(root & 63)) - one
            Pst[0, w] = x
            if x:
                cnt_p += popcount64(x)
        if cnt_p + 1 <= best:
            continue
        C[0] = root
        kmin = best - 1 + 1
        if kmin < 1:
            kmin = 1
        cnt = _color_sort(adj, Pst[0], nw, kmin, U[0], col[0], Q, R)
        pos[0] = cnt - 1
        L = 0
        while L >= 0:
            p = pos[L]
            if p < 0 or (L + 1) + col[L, p] <= best:
                L -= 1
                if L >= 0:
                    v = U[L, pos[L]]
                    Pst[L, v >> 6] &= ~(one << np.uint64(v & 63))
                    pos[L] -= 1
                continue
            v = U[L, p]
            nodes += 1
            if nodes > node_limit:
                best_arr[0] = best
                nodes_arr[0] = nodes
                return False
            nonempty = False
            for w in range(nw):
                x = Pst[L, w] & adj[v, w]
                Pst[L + 1, w] = x
                if x:
                    nonempty = True
            C[L + 1] = v
            if not nonempty:
                if L + 2 > best:
                    best = L + 2
                    for k in range(L + 2):
                        best_members[k] = C[k]
                Pst[L, v >> 6] &= ~(one << np.uint64(v & 63))
                pos[L] -= 1
                continue
            kmin = best - (L + 2) + 1
            if kmin < 1:
                kmin = 1
            cnt = _color_sort(adj, Pst[L + 1], nw, kmin, U[L + 1], col[L + 1], Q, R)
            if cnt == 0:
                Pst[L, v >> 6] &= ~(one << np.uint64(v & 63))
                pos[L] -= 1
                continue
            pos[L + 1] = cnt - 1
            L += 1
    best_arr[0] = best
    nodes_arr[0] = nodes
    return True


@njit(cache=True, nogil=True)
def _lex_search(adj, target, v_lo, v_hi, out, node_limit, nodes_arr):
    """First clique of size ``target`` in lexicographic order whose smallest
    member lies in ``[v_lo, v_hi)``.

    Returns 1 if found (written to ``out``), 0 if none, -1 on budget
    exhaustion.
    """
    n, nw = adj.shape
    Pst = np.zeros((target + 1, nw), np.uint64)
    C = np.zeros(target + 1, np.int64)
    nxt = np.zeros(target + 1, np.int64)
    Q = np.empty(nw, np.uint64)
    R = np.empty(nw, np.uint64)
    one = np.uint64(1)
    nodes = nodes_arr[0]
    for v0 in range(v_lo, v_hi):
        cnt_p = 0
        for w in range(nw):
            x = adj[v0, w]
            if w < (v0 >> 6):
                x = np.uint64(0)
            elif w == (v0 >> 6):
                x &= ~((one << np.uint64(v0 & 63)) - one) & ~(one << np.uint64(v0 & 63))
            Pst[0, w] = x
            if x:
                cnt_p += popcount64(x)
        C[0] = v0
        if target == 1:
            out[0] = v0
            nodes_arr[0] = nodes
            return 1
        if cnt_p + 1 < target:
            continue
        if 1 + _count_colors(adj, Pst[0], nw, Q, R) < target:
            continue
        L = 0
        nxt[0] = 0
        while L >= 0:
            # next candidate at level L in ascending order
            v = -1
            for w in range(nxt[L] >> 6, nw):
                if Pst[L, w]:
                    v = (w << 6) + lowest_bit(Pst[L, w])
                    break
            if v < 0 or (L + 1) + row_popcount(Pst[L], nw) < target:
                L -= 1
                continue
            Pst[L, v >> 6] &= ~(one << np.uint64(v & 63))
            nxt[L] = v
            nodes += 1
            if nodes > node_limit:
                nodes_arr[0] = nodes
                return -1
            cnt_p = 0
            for w in range(nw):
                x = Pst[L, w] & adj[v, w]
                Pst[L + 1, w] = x
                if x:
                    cnt_p += popcount64(x)
            C[L + 1] = v
            if L + 2 == target:
                for k in range(target):
                    out[k] = C[k]
                nodes_arr[0] = nodes
                return 1
            if (L + 2) + cnt_p < target:
                continue
            if (L + 2) + _count_colors(adj, Pst[L + 1], nw, Q, R) < target:
                continue
            nxt[L + 1] = 0
            L += 1
    nodes_arr[0] = nodes
    return 0


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def degeneracy_order(g) -> tuple[np.ndarray, np.ndarray]:
    """(vertex removal order, core number per vertex)."""
    n, adj = _graph_arrays(g)
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return _degeneracy(adj)


def greedy_clique_lower_bound(g) -> CliqueResult:
    """A maximal clique found greedily from every root, preferring high-core
    vertices. Valid but not necessarily maximum."""
    n, adj = _graph_arrays(g)
    if n == 0:
        return CliqueResult((), True)
    order, core = _degeneracy(adj)
    newidx = np.empty(n, np.int64)
    newidx[order] = n - 1 - np.arange(n)
    radj = _relabel(adj, newidx)
    rcore = np.empty(n, np.int64)
    rcore[newidx] = core
    size, members = _greedy(radj, rcore)
    old = np.empty(n, np.int64)
    old[newidx] = np.arange(n)
    return CliqueResult(tuple(sorted(int(old[m]) for m in members)), False)


def max_clique(g, node_budget: int | None = None, time_budget: float | None = None) -> CliqueResult:
    """Maximum clique of ``g`` (anything with ``n`` and bitset ``adjacency``).

    When the search completes, ``certified_exact`` is True and ``members`` is
    the lexicographically smallest maximum clique. On budget exhaustion the
    best clique found so far is returned with ``certified_exact`` False.
    """
    n, adj = _graph_arrays(g)
    if n == 0:
        return CliqueResult((), True)
    deadline = None if time_budget is None else time.perf_counter() + time_budget
    limit = _NO_LIMIT if node_budget is None else np.int64(node_budget)

    order, core = _degeneracy(adj)
    newidx = np.empty(n, np.int64)
    newidx[order] = n - 1 - np.arange(n)
    old = np.empty(n, np.int64)
    old[newidx] = np.arange(n)
    radj = _relabel(adj, newidx)
    rcore = np.empty(n, np.int64)
    rcore[newidx] = core

    size, members = _greedy(radj, rcore)
    best = np.array([size], np.int64)
    best_members = np.zeros(n + 1, np.int64)
    best_members[:size] = members
    nodes = np.zeros(1, np.int64)

    def incumbent(certified: bool) -> CliqueResult:
        m = tuple(sorted(int(old[v]) for v in best_members[: best[0]]))
        return CliqueResult(m, certified, int(nodes[0]))

    # roots in removal order = highest relabeled index first
    hi = n
    while hi > 0:
        lo = max(0, hi - _ROOT_BATCH)
        if not _search_roots(radj, rcore, hi, lo, best, best_members, limit, nodes):
            return incumbent(False)
        hi = lo
        if deadline is not None and hi > 0 and time.perf_counter() > deadline:
            return incumbent(False)

    target = int(best[0])
    out = np.zeros(target, np.int64)
    lo = 0
    while lo < n:
        hi = min(n, lo + _ROOT_BATCH)
        status = _lex_search(adj, target, lo, hi, out, limit, nodes)
        if status == 1:
            return CliqueResult(tuple(int(v) for v in out), True, int(nodes[0]))
        if status == -1:
            break
        lo = hi
        if deadline is not None and lo < n and time.perf_counter() > deadline:
            break
    # size is proven optimal even if the tie-break pass was cut short
    return incumbent(True)


def brute_force_max_clique_size(g) -> int:
    """Exhaustive oracle over all vertex subsets (small graphs only)."""
    n = int(g.n)
    if n > 24:
        raise ValueError("brute force oracle is limited to n <= 24")
    dense = bitset.to_dense(g.adjacency, n) if n else np.zeros((0, 0), bool)
    nbr = [sum(1 << j for j in range(n) if dense[i, j]) for i in range(n)]
    best = 0
    for mask in range(1, 1 << n):
        size = mask.bit_count()
        if size <= best:
            continue
        ok = True
        m = mask
        while m:
            b = m & -m
            i = b.bit_length() - 1
            if (mask & ~b) & ~nbr[i]:
                ok = False
                break
            m ^= b
        if ok:
            best = size
    return best
