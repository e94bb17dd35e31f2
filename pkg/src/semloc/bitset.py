"""Dense bitset adjacency: row ``i`` is an array of uint64 words, bit ``j``
set iff vertices ``i`` and ``j`` are adjacent."""

from __future__ import annotations

import numpy as np
from numba import njit

_ONE = np.uint64(1)
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


def n_words(n: int) -> int:
    return (n + 63) >> 6


@njit(cache=True, nogil=True, inline="always")
def popcount64(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return np.int64((x * _H01) >> np.uint64(56))


@njit(cache=True, nogil=True, inline="always")
def lowest_bit(x):
    """Index of the lowest set bit of a nonzero word."""
    return popcount64((x & (~x + _ONE)) - _ONE)


@njit(cache=True, nogil=True)
def row_popcount(row, nw):
    c = 0
    for w in range(nw):
        if row[w]:
            c += popcount64(row[w])
    return c


@njit(cache=True, nogil=True)
def degrees(adj):
    n, nw = adj.shape
    out = np.zeros(n, np.int64)
    for i in range(n):
        out[i] = row_popcount(adj[i], nw)
    return out


def from_dense(mat) -> np.ndarray:
    """Bitset rows from a square boolean matrix (diagonal ignored)."""
    mat = np.asarray(mat, dtype=bool)
    n = mat.shape[0]
    mat = mat & ~np.eye(n, dtype=bool)
    nw = n_words(n)
    padded = np.zeros((n, nw * 64), dtype=bool)
    padded[:, :n] = mat
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def to_dense(adj: np.ndarray, n: int) -> np.ndarray:
    """Boolean matrix with ``adj.shape[0]`` rows and ``n`` columns."""
    rows = adj.shape[0]
    if n == 0 or rows == 0:
        return np.zeros((rows, n), dtype=bool)
    nw = adj.shape[1]
    bytes_ = np.ascontiguousarray(adj.astype("<u8")).view(np.uint8).reshape(rows, nw * 8)
    bits = np.unpackbits(bytes_, axis=1, bitorder="little")
    return bits[:, :n].astype(bool)


def members(row: np.ndarray, n: int) -> list[int]:
    return np.flatnonzero(to_dense(row.reshape(1, -1), n)[0]).tolist()
