"""2D-3D feature retrieval along projection rays, and training losses.

The argmax index map of a projection picks, for every 2D location, one
depth in the 3D feature grid; gathering along it turns a 3D feature map
into a 2D one at any pyramid level. Losses are plain numpy with analytic
gradients with respect to the probabilities, for use as oracles or in
framework-free training loops.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimsMismatchError, ValidationError
from .projection import AXES, Mask2D, Mip2D
from .volume import ProbabilityVolume
from .voxels import as_coords, check_bounds

_EPS_LOG = 1e-7
_DICE_SMOOTH = 1e-5


@dataclass(frozen=True)
class FeatureGrid3D:
    """Channel-first 3D feature map, shape (C, H, W, D)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if arr.ndim != 4:
            raise ValidationError(f"3D features must have shape (C, H, W, D), got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class FeatureGrid2D:
    """Channel-first 2D feature map, shape (C, H, W)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float32))
        if arr.ndim != 3:
            raise ValidationError(f"2D features must have shape (C, H, W), got {arr.shape}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class IndexMapPyramidLevel:
    """Argmax depth map downscaled to pyramid level ``level``.

    ``index`` has shape (H / 2^level, W / 2^level) with values in
    [0, depth), where ``depth`` is the source depth divided by 2^level.
    """

    level: int
    index: np.ndarray
    depth: int

    def __post_init__(self):
        if not (0 <= self.level <= 3):
            raise ValidationError(f"pyramid level must be in [0, 3], got {self.level}")
        arr = np.ascontiguousarray(np.asarray(self.index, dtype=np.int32))
        if arr.ndim != 2:
            raise ValidationError(f"index map must be 2D, got ndim={arr.ndim}")
        if self.depth <= 0:
            raise ValidationError(f"depth must be positive, got {self.depth}")
        if arr.size and (arr.min() < 0 or arr.max() >= self.depth):
            raise ValidationError(f"index values must lie in [0, {self.depth})")
        arr.flags.writeable = False
        object.__setattr__(self, "index", arr)


def downscale_index(mip: Mip2D, level: int) -> IndexMapPyramidLevel:
    """Downscale the argmax index map to a pyramid level.

    Spatially this is nearest-neighbor subsampling by 2^level (top-left of
    each block); values divide by 2^level with floor and clamp. The source
    dims must all be divisible by 2^level; pad the volume first otherwise.
    """
    if not (0 <= level <= 3):
        raise ValidationError(f"pyramid level must be in [0, 3], got {level}")
    factor = 1 << level
    a, b = mip.shape
    depth = mip.source_dims[AXES[mip.axis]]
    if a % factor or b % factor or depth % factor:
        raise ValidationError(
            f"dims ({a}, {b}, depth {depth}) must be divisible by {factor} for level "
            f"{level}; crop or pad first"
        )
    index = mip.index[::factor, ::factor] // factor
    index = np.minimum(index, depth // factor - 1)
    return IndexMapPyramidLevel(level=level, index=index, depth=depth // factor)


def feature_retrieve(features: FeatureGrid3D, level_map: IndexMapPyramidLevel) -> FeatureGrid2D:
    """Gather 3D features along the projection rays: out[c, a, b] = f[c, a, b, idx[a, b]]."""
    c, h, w, d = features.values.shape
    if level_map.index.shape != (h, w):
        raise DimsMismatchError(
            f"index map shape {level_map.index.shape} does not match feature grid ({h}, {w})"
        )
    if level_map.index.size and int(level_map.index.max()) >= d:
        raise ValidationError(
            f"index map addresses depth {int(level_map.index.max())} but features have depth {d}"
        )
    a, b = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return FeatureGrid2D(features.values[:, a, b, level_map.index])


def _clamped_log(p: np.ndarray) -> np.ndarray:
    return np.log(np.clip(p, _EPS_LOG, 1.0 - _EPS_LOG))


def _grad_log_clamp(p: np.ndarray) -> np.ndarray:
    """d/dp log(clip(p)); zero outside the clamp window."""
    inside = (p > _EPS_LOG) & (p < 1.0 - _EPS_LOG)
    return np.where(inside, 1.0 / np.clip(p, _EPS_LOG, 1.0 - _EPS_LOG), 0.0)


def loss_3d(
    p: ProbabilityVolume,
    s_fg,
    s_seed,
    s_bg,
    return_grad: bool = False,
):
    """Cross-entropy over three voxel sets of a foreground probability map.

    Sums the mean negative log foreground probability over the foreground
    set and the seed set, and the mean negative log background probability
    over the background set. Probabilities are clamped to
    [1e-7, 1 - 1e-7]. An empty set contributes zero and warns. With
    ``return_grad`` the float64 gradient with respect to the foreground
    probability of every voxel is returned alongside the value.
    """
    pf = p.p_fg.astype(np.float64)
    grad = np.zeros(p.dims, dtype=np.float64) if return_grad else None
    total = 0.0
    for name, coords, positive in (
        ("foreground", s_fg, True),
        ("seed", s_seed, True),
        ("background", s_bg, False),
    ):
        coords = as_coords(coords)
        if coords.shape[0] == 0:
            warnings.warn(f"loss_3d: empty {name} set contributes zero", stacklevel=2)
            continue
        check_bounds(coords, p.dims, f"{name} voxel")
        ix = (coords[:, 0], coords[:, 1], coords[:, 2])
        prob = pf[ix] if positive else 1.0 - pf[ix]
        total += float(-_clamped_log(prob).mean())
        if return_grad:
            sign = -1.0 if positive else 1.0
            contrib = sign * _grad_log_clamp(prob) / coords.shape[0]
            np.add.at(grad, ix, contrib)
    return (total, grad) if return_grad else total


def _dice_loss(p: np.ndarray, y: np.ndarray, return_grad: bool):
    """Soft Dice loss 1 - (2*sum(p*y) + s) / (sum(p) + sum(y) + s)."""
    p = p.astype(np.float64)
    y = y.astype(np.float64)
    num = 2.0 * float((p * y).sum()) + _DICE_SMOOTH
    den = float(p.sum()) + float(y.sum()) + _DICE_SMOOTH
    value = 1.0 - num / den
    if not return_grad:
        return value, None
    grad = -(2.0 * y * den - num) / (den * den)
    return value, grad


def loss_2d(
    p2d_from_3d: np.ndarray,
    p2d: np.ndarray,
    annotation: Mask2D,
    return_grad: bool = False,
):
    """Sum of two soft Dice losses against the projection annotation.

    The first term scores the 2D image gathered from the 3D prediction,
    the second the native 2D prediction. With ``return_grad`` the
    gradients with respect to both images are returned as float64 arrays.
    """
    a = np.asarray(p2d_from_3d, dtype=np.float64)
    b = np.asarray(p2d, dtype=np.float64)
    y = annotation.bits
    if a.shape != y.shape or b.shape != y.shape:
        raise DimsMismatchError(
            f"both predictions must match the annotation shape {y.shape}, "
            f"got {a.shape} and {b.shape}"
        )
    va, ga = _dice_loss(a, y, return_grad)
    vb, gb = _dice_loss(b, y, return_grad)
    value = va + vb
    return (value, ga, gb) if return_grad else value


def loss_all(l3d: float, l2d: float, lam: float = 1.0) -> float:
    """Total loss: 3D term plus ``lam`` times the 2D consistency term."""
    if not np.isfinite(lam) or lam < 0:
        raise ValidationError(f"lambda must be nonnegative and finite, got {lam}")
    return float(l3d) + float(lam) * float(l2d)
