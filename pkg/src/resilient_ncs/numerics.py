"""Dense small-matrix kernel.

Everything here works on plain ``numpy`` float arrays. Matrices are at most a
few dozen rows, so the routines favour accuracy and clear failure modes over
speed.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonFinite

SYMMETRY_RTOL = 1e-12
NULL_RANK_RTOL = 1e-10


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Coerce ``value`` to a finite 2-D float array (vectors become columns)."""
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} has non-finite entries")
    return arr


def as_symmetric(value, name: str = "matrix", rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Return ``(S + S^T)/2`` after checking that ``S`` is symmetric to ``rtol``."""
    S = as_matrix(value, name)
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {S.shape}")
    scale = 1.0 + (np.max(np.abs(S)) if S.size else 0.0)
    if S.size and np.max(np.abs(S - S.T)) > rtol * scale:
        raise DimensionMismatch(f"{name} is not symmetric")
    return 0.5 * (S + S.T)


def assemble_block(grid: Sequence[Sequence]) -> np.ndarray:
    """Concatenate a 2-D grid of blocks.

    A cell may be an array or ``None``/``0`` meaning a zero block whose shape is
    inferred from the other cells in its grid row and column.
    """
    if not grid or not all(len(row) == len(grid[0]) for row in grid):
        raise DimensionMismatch("grid must be a non-empty rectangular list of rows")
    n_rows, n_cols = len(grid), len(grid[0])
    row_h: list[int | None] = [None] * n_rows
    col_w: list[int | None] = [None] * n_cols
    cells: list[list[np.ndarray | None]] = []
    for i, row in enumerate(grid):
        parsed = []
        for j, cell in enumerate(row):
            if cell is None or (np.isscalar(cell) and cell == 0):
                parsed.append(None)
                continue
            block = as_matrix(cell, f"block ({i},{j})")
            r, c = block.shape
            if row_h[i] is not None and row_h[i] != r:
                raise DimensionMismatch(f"block ({i},{j}) has {r} rows, expected {row_h[i]}")
            if col_w[j] is not None and col_w[j] != c:
                raise DimensionMismatch(f"block ({i},{j}) has {c} cols, expected {col_w[j]}")
            row_h[i], col_w[j] = r, c
            parsed.append(block)
        cells.append(parsed)
    if any(h is None for h in row_h) or any(w is None for w in col_w):
        raise DimensionMismatch("cannot infer the size of an all-zero grid row or column")
    out = np.zeros((sum(row_h), sum(col_w)))
    r0 = 0
    for i in range(n_rows):
        c0 = 0
        for j in range(n_cols):
            if cells[i][j] is not None:
                out[r0:r0 + row_h[i], c0:c0 + col_w[j]] = cells[i][j]
            c0 += col_w[j]
        r0 += row_h[i]
    return out


def extreme_eigenvalues(S) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    arr = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFinite("matrix has non-finite entries")
    w = np.linalg.eigvalsh(0.5 * (arr + arr.T))
    return float(w[0]), float(w[-1])


def orthonormal_null_basis(M) -> np.ndarray:
    """Orthonormal basis of ``null(M)`` as columns; may have zero columns."""
    M = as_matrix(M, "M")
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > NULL_RANK_RTOL * smax)) if smax > 0 else 0
    return vh[rank:].T.copy()


def spectral_radius(A) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(A, dtype=float)))))


def zoh_discretize(A_c, B_c, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization via one exponential of ``[[A, B], [0, 0]]·T``."""
    A_c = as_matrix(A_c, "A_c")
    B_c = as_matrix(B_c, "B_c")
    n = A_c.shape[0]
    if A_c.shape != (n, n):
        raise DimensionMismatch("A_c must be square")
    if B_c.shape[0] != n:
        raise DimensionMismatch("B_c must have as many rows as A_c")
    if not T > 0:
        raise ValueError("sampling time must be positive")
    m = B_c.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A_c
    aug[:n, n:] = B_c
    E = scipy.linalg.expm(aug * T)
    if not np.all(np.isfinite(E)):
        raise NonFinite("matrix exponential overflowed")
    return E[:n, :n], E[:n, n:]
