"""Input validation helpers shared across the package.

Conventions: validated arrays come back as fresh C-contiguous float64 /
int64 / bool copies so downstream code never mutates caller data.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError


def as_float_matrix(values, cols: int | None = None, name: str = "array") -> np.ndarray:
    out = np.asarray(values, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got ndim={out.ndim}")
    if cols is not None and out.shape[1] != cols:
        raise DimensionMismatchError(f"{name} must have {cols} columns, got {out.shape[1]}")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(out)


def as_index_matrix(values, cols: int | None = None, name: str = "array") -> np.ndarray:
    out = np.asarray(values)
    if not np.issubdtype(out.dtype, np.integer):
        raise ValueError(f"{name} must be an integer array, got dtype={out.dtype}")
    out = out.astype(np.int64)
    if out.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got ndim={out.ndim}")
    if cols is not None and out.shape[1] != cols:
        raise DimensionMismatchError(f"{name} must have {cols} columns, got {out.shape[1]}")
    return np.ascontiguousarray(out)


def check_signal(values, n_vertices: int | None = None, channels: int | None = 3,
                 name: str = "signal") -> np.ndarray:
    """Validate a per-vertex signal, returned as (n, c) float64."""
    out = np.asarray(values, dtype=np.float64)
    if out.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D (n, c), got ndim={out.ndim}")
    if channels is not None and out.shape[1] != channels:
        raise DimensionMismatchError(f"{name} must have {channels} channels, got {out.shape[1]}")
    if n_vertices is not None and out.shape[0] != n_vertices:
        raise DimensionMismatchError(
            f"{name} has {out.shape[0]} rows for a mesh with {n_vertices} vertices")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(out)


def check_vertex_mask(mask, n_vertices: int, name: str = "mask") -> np.ndarray:
    """Accept a boolean mask of length n or an integer index list; return bool (n,)."""
    arr = np.asarray(mask)
    if arr.dtype == bool:
        if arr.shape != (n_vertices,):
            raise DimensionMismatchError(
                f"{name} has shape {arr.shape}, expected ({n_vertices},)")
        return arr.copy()
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be boolean or integer indices, got dtype={arr.dtype}")
    arr = arr.astype(np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= n_vertices):
        raise DimensionMismatchError(f"{name} indices out of range for n={n_vertices}")
    out = np.zeros(n_vertices, dtype=bool)
    out[arr] = True
    return out


def check_weights(weights, length: int, name: str = "weights") -> np.ndarray:
    out = np.asarray(weights, dtype=np.float64).reshape(-1)
    if out.shape != (length,):
        raise DimensionMismatchError(f"{name} has shape {out.shape}, expected ({length},)")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite values")
    if (out < 0).any():
        raise ValueError(f"{name} contains negative entries")
    return out.copy()
