"""Helpers for voxel sets exchanged between pipeline stages.

A voxel set is an ``(N, 3)`` int64 array of ``(x, y, z)`` coordinates in
lexicographic order. The empty set is a ``(0, 3)`` array. Boolean occupancy
grids are used internally where whole-volume algebra is cheaper.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

Dims = tuple[int, int, int]


def empty_coords() -> np.ndarray:
    return np.empty((0, 3), dtype=np.int64)


def as_coords(points) -> np.ndarray:
    """Coerce a sequence of (x, y, z) triples to a canonical coordinate array."""
    arr = np.asarray(points, dtype=np.int64)
    if arr.size == 0:
        return empty_coords()
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"expected an (N, 3) coordinate array, got shape {arr.shape}")
    return arr


def check_bounds(coords: np.ndarray, dims: Dims, what: str = "coordinate") -> None:
    if coords.size and ((coords < 0).any() or (coords >= np.asarray(dims)).any()):
        raise ValidationError(f"{what} outside volume of dims {dims}")


def coords_to_mask(coords: np.ndarray, dims: Dims) -> np.ndarray:
    coords = as_coords(coords)
    check_bounds(coords, dims)
    mask = np.zeros(dims, dtype=bool)
    if coords.size:
        mask[coords[:, 0], coords[:, 1], coords[:, 2]] = True
    return mask


def mask_to_coords(mask: np.ndarray) -> np.ndarray:
    """Coordinates of set voxels, lexicographic in (x, y, z)."""
    idx = np.flatnonzero(mask.ravel(order="C"))
    if idx.size == 0:
        return empty_coords()
    return np.stack(np.unravel_index(idx, mask.shape), axis=1).astype(np.int64)
