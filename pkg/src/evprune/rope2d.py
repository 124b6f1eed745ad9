"""2D rotary position embedding over a patch grid.

A d-dimensional vector (d divisible by 4) is treated as d/4 consecutive
blocks of four components. For a token at grid position (i, j), block m
(1-based) rotates its first component pair by angle i * theta_m and its
second pair by j * theta_m, with theta_m = 10000 ** (-2m / d). The
equivalent d x d block-diagonal rotation matrix is available from
``rope_matrix`` as a reference implementation for tests.

Rotations preserve norms, compose additively over positions, and leave
query/key inner products invariant under a common translation of both
positions, which is what makes packed sequences position-faithful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _thetas(d: int) -> np.ndarray:
    m = np.arange(1, d // 4 + 1, dtype=np.float64)
    return 10000.0 ** (-2.0 * m / d)


@dataclass(frozen=True, eq=False)
class RopeTable:
    """Cos/sin factors cached per coordinate value (O(rows + cols) memory)."""

    rows: int
    cols: int
    d: int
    cos_row: np.ndarray  # (rows, d/4)
    sin_row: np.ndarray
    cos_col: np.ndarray  # (cols, d/4)
    sin_col: np.ndarray


def build_rope(rows: int, cols: int, d: int) -> RopeTable:
    if d < 4 or d % 4 != 0:
        raise ValidationError(f"embedding dimension must be divisible by 4, got {d}")
    if rows < 1 or cols < 1:
        raise ValidationError("grid extent must be >= 1")
    theta = _thetas(d)
    row_angles = np.arange(rows, dtype=np.float64)[:, None] * theta[None, :]
    col_angles = np.arange(cols, dtype=np.float64)[:, None] * theta[None, :]
    return RopeTable(
        rows, cols, d,
        np.cos(row_angles), np.sin(row_angles),
        np.cos(col_angles), np.sin(col_angles),
    )


def apply_rope(table: RopeTable, pos: tuple[int, int], v: np.ndarray) -> np.ndarray:
    """Rotate one d-vector by its position's block rotations."""
    i, j = pos
    if not (0 <= i < table.rows and 0 <= j < table.cols):
        raise ValidationError(f"position {pos} outside table extent")
    vec = np.asarray(v, dtype=np.float64)
    if vec.shape != (table.d,):
        raise ValidationError(f"expected a vector of length {table.d}, got {vec.shape}")
    return apply_rope_many(table, [pos], vec[None, :])[0]


def apply_rope_many(
    table: RopeTable, positions: list[tuple[int, int]] | tuple, v: np.ndarray
) -> np.ndarray:
    """Rotate a batch: v has shape (n, d) or (n, heads, d), one position per row."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape[-1] != table.d:
        raise ValidationError(f"last dimension must be {table.d}, got {arr.shape[-1]}")
    n = arr.shape[0]
    if len(positions) != n:
        raise ValidationError("one position per row required")
    if n == 0:
        return arr.copy()
    ii = np.fromiter((p[0] for p in positions), dtype=np.intp, count=n)
    jj = np.fromiter((p[1] for p in positions), dtype=np.intp, count=n)
    if np.any(ii < 0) or np.any(ii >= table.rows) or np.any(jj < 0) or np.any(jj >= table.cols):
        raise ValidationError("position outside table extent")

    blocks = arr.reshape(arr.shape[:-1] + (table.d // 4, 4))
    # factor shape (n, d/4) broadcast over any middle axes (e.g. heads)
    shape = (n,) + (1,) * (arr.ndim - 2) + (table.d // 4,)
    ca = table.cos_row[ii].reshape(shape)
    sa = table.sin_row[ii].reshape(shape)
    cb = table.cos_col[jj].reshape(shape)
    sb = table.sin_col[jj].reshape(shape)

    x0, x1, x2, x3 = blocks[..., 0], blocks[..., 1], blocks[..., 2], blocks[..., 3]
    out = np.empty_like(blocks)
    out[..., 0] = x0 * ca - x1 * sa
    out[..., 1] = x0 * sa + x1 * ca
    out[..., 2] = x2 * cb - x3 * sb
    out[..., 3] = x2 * sb + x3 * cb
    return out.reshape(arr.shape)


def rope_matrix(i: int, j: int, d: int) -> np.ndarray:
    """Full block-diagonal rotation matrix; reference form for tests.

    Accepts any integer coordinates (including sums of positions) so the
    composition law can be checked directly.
    """
    if d < 4 or d % 4 != 0:
        raise ValidationError(f"embedding dimension must be divisible by 4, got {d}")
    theta = _thetas(d)
    mat = np.zeros((d, d), dtype=np.float64)
    for b in range(d // 4):
        ca, sa = np.cos(i * theta[b]), np.sin(i * theta[b])
        cb, sb = np.cos(j * theta[b]), np.sin(j * theta[b])
        o = 4 * b
        mat[o, o], mat[o, o + 1] = ca, -sa
        mat[o + 1, o], mat[o + 1, o + 1] = sa, ca
        mat[o + 2, o + 2], mat[o + 2, o + 3] = cb, -sb
        mat[o + 3, o + 2], mat[o + 3, o + 3] = sb, cb
    return mat
