"""Enumeration helpers shared by the representation check and the oracle."""

from __future__ import annotations

import itertools
from math import comb

import numpy as np


def simplex_grid_size(dim: int, resolution: int) -> int:
    return comb(resolution + dim - 1, dim - 1)


def simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All points of the probability simplex with coordinates in multiples of 1/resolution.

    Rows come in lexicographic order of the integer compositions.
    """
    return _compositions(dim, resolution) / resolution


def _compositions(dim: int, total: int) -> np.ndarray:
    if dim == 1:
        return np.array([[total]], dtype=np.int64)
    if dim == 2:
        head = np.arange(total + 1)
        return np.column_stack([head, total - head])
    blocks = []
    for head in range(total + 1):
        tail = _compositions(dim - 1, total - head)
        blocks.append(np.column_stack([np.full(tail.shape[0], head), tail]))
    return np.vstack(blocks)


def box_grid_chunks(n: int, levels: np.ndarray, chunk_rows: int = 1 << 18):
    """Yield the m**n box grid in lexicographic order, in row chunks."""
    m = levels.size
    total = m ** n
    for start in range(0, total, chunk_rows):
        idx = np.arange(start, min(start + chunk_rows, total))
        digits = np.empty((idx.size, n), dtype=np.int64)
        rem = idx
        for j in range(n - 1, -1, -1):
            digits[:, j] = rem % m
            rem = rem // m
        yield start, levels[digits]


def polytope_vertices(A: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Vertices of {x : A x <= b} in low dimension by brute-force active-set enumeration."""
    m, n = A.shape
    found = []
    for rows in itertools.combinations(range(m), n):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ x <= b + tol * np.maximum(1.0, np.abs(b))):
            found.append(x)
    if not found:
        return np.zeros((0, n))
    pts = np.array(found)
    # merge duplicates produced by degenerate vertices
    keys = np.round(pts, 12)
    _, keep = np.unique(keys, axis=0, return_index=True)
    return pts[np.sort(keep)]
