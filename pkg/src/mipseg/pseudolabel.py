"""3D pseudo-labels from a single projection annotation.

Foreground grows outward from back-projected seeds by intensity similarity
to the frozen seed mean; background combines three intensity/geometry rules
evaluated against the annotation columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimsMismatchError, EmptySetError, ValidationError
from .projection import AXES, Mask2D, _check_axis
from .volume import BG, FG, UNLABELED, ScalarVolume3D, TernaryLabelVolume
from .voxels import as_coords, check_bounds, coords_to_mask, mask_to_coords


def _offsets(connectivity: int) -> np.ndarray:
    deltas = [
        (dx, dy, dz)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        for dz in (-1, 0, 1)
        if (dx, dy, dz) != (0, 0, 0)
        and (connectivity == 26 or abs(dx) + abs(dy) + abs(dz) == 1)
    ]
    return np.asarray(deltas, dtype=np.int64)


@dataclass(frozen=True)
class GrowConfig:
    """Region-growing knobs.

    ``alpha`` is the maximum absolute difference from the frozen seed-mean
    intensity (strict); ``connectivity`` is 26 (default) or 6.
    """

    alpha: float = 0.1
    connectivity: int = 26

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValidationError(f"alpha must be positive and finite, got {self.alpha}")
        if self.connectivity not in (6, 26):
            raise ValidationError(f"connectivity must be 6 or 26, got {self.connectivity}")


@dataclass(frozen=True)
class BackgroundConfig:
    """Coefficients on the seed-mean intensity for the background rules.

    Dark foreground columns fall below ``beta_coef * v_ave``; the ambiguous
    band excluded from unannotated columns is the open interval
    (``gamma_coef * v_ave``, ``eta_coef * v_ave``).
    """

    beta_coef: float = 0.2
    gamma_coef: float = 1.2
    eta_coef: float = 1.6

    def __post_init__(self):
        for name in ("beta_coef", "gamma_coef", "eta_coef"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive and finite, got {v}")
        if self.gamma_coef >= self.eta_coef:
            raise ValidationError("gamma_coef must be below eta_coef")


def foreground_mean(volume: ScalarVolume3D, seeds) -> float:
    """Mean intensity over a voxel set, accumulated in float64."""
    seeds = as_coords(seeds)
    if seeds.shape[0] == 0:
        raise EmptySetError("cannot take the mean intensity of an empty voxel set")
    check_bounds(seeds, volume.dims, "seed")
    vals = volume.data[seeds[:, 0], seeds[:, 1], seeds[:, 2]]
    return float(vals.mean(dtype=np.float64))


def region_grow(volume: ScalarVolume3D, seeds, cfg: GrowConfig = GrowConfig()) -> np.ndarray:
    """Breadth-first growth from ``seeds`` by similarity to their mean.

    A candidate joins when ``|X(q) - v_ave| < alpha`` with ``v_ave`` frozen
    from the original seeds. Seeds are always kept. The result is a set, so
    it does not depend on seed order.
    """
    seeds = as_coords(seeds)
    if seeds.shape[0] == 0:
        raise EmptySetError("region growing needs at least one seed")
    dims = volume.dims
    check_bounds(seeds, dims, "seed")
    v_ave = foreground_mean(volume, seeds)

    admissible = np.abs(volume.data.astype(np.float64) - v_ave) < cfg.alpha
    offsets = _offsets(cfg.connectivity)
    dims_arr = np.asarray(dims)

    region = coords_to_mask(seeds, dims)
    visited = region.copy()
    frontier = np.unique(seeds, axis=0)
    while frontier.shape[0]:
        cand = (frontier[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
        ok = ((cand >= 0) & (cand < dims_arr)).all(axis=1)
        cand = cand[ok]
        if cand.shape[0] == 0:
            break
        lin = np.unique(np.ravel_multi_index((cand[:, 0], cand[:, 1], cand[:, 2]), dims))
        lin = lin[~visited.ravel()[lin]]
        visited.ravel()[lin] = True
        lin = lin[admissible.ravel()[lin]]
        region.ravel()[lin] = True
        frontier = np.stack(np.unravel_index(lin, dims), axis=1)
    return mask_to_coords(region)


def build_background(
    volume: ScalarVolume3D,
    annotation: Mask2D,
    axis: str,
    v_ave: float,
    cfg: BackgroundConfig = BackgroundConfig(),
) -> np.ndarray:
    """Background voxel set from the annotation and seed-mean thresholds.

    Takes every voxel on unannotated columns, plus dark voxels (below
    ``beta_coef * v_ave``) on annotated columns, then drops voxels on
    unannotated columns whose intensity falls inside the ambiguous band
    (``gamma_coef * v_ave``, ``eta_coef * v_ave``).
    """
    ax = _check_axis(axis)
    expected = tuple(d for i, d in enumerate(volume.dims) if i != ax)
    if annotation.shape != expected:
        raise DimsMismatchError(
            f"annotation shape {annotation.shape} does not match projection shape {expected}"
        )
    if not (np.isfinite(v_ave) and v_ave > 0):
        raise ValidationError(f"v_ave must be positive and finite, got {v_ave}")

    x = volume.data.astype(np.float64)
    on_column = np.broadcast_to(np.expand_dims(annotation.bits, ax), volume.dims)
    beta = cfg.beta_coef * v_ave
    gamma = cfg.gamma_coef * v_ave
    eta = cfg.eta_coef * v_ave

    unannotated = ~on_column
    dark_on_column = on_column & (x < beta)
    ambiguous = unannotated & (gamma < x) & (x < eta)
    return mask_to_coords((unannotated | dark_on_column) & ~ambiguous)


def assemble_pseudolabel(s1, s0, dims) -> tuple[TernaryLabelVolume, np.ndarray]:
    """Combine foreground and background sets into a ternary volume.

    Voxels claimed by both sets are conflicts: they are marked unlabeled
    and returned separately so refinement can treat them as removals.
    """
    dims = tuple(int(d) for d in dims)
    m1 = coords_to_mask(s1, dims)
    m0 = coords_to_mask(s0, dims)
    conflicts = m1 & m0
    labels = np.full(dims, UNLABELED, dtype=np.uint8)
    labels[m1 & ~conflicts] = FG
    labels[m0 & ~conflicts] = BG
    return TernaryLabelVolume(labels), mask_to_coords(conflicts)
