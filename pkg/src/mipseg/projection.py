"""Maximum intensity projection, argmax index maps, and back-projection.

Projecting along an axis drops it and keeps the remaining two in (x, y, z)
order, so a z projection is an (H, W) image, a y projection (H, D), and an
x projection (W, D). Row index of the 2D image maps to the first remaining
axis, column index to the second; exported PNGs have height = rows and
width = columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimsMismatchError, MaskPngError, ValidationError
from .volume import Dims, ScalarVolume3D
from .voxels import empty_coords

AXES = {"x": 0, "y": 1, "z": 2}


def _check_axis(axis: str) -> int:
    if axis not in AXES:
        raise ValidationError(f"axis must be one of 'x', 'y', 'z', got {axis!r}")
    return AXES[axis]


@dataclass(frozen=True)
class Mip2D:
    """A projection image plus the per-pixel argmax depth along the axis.

    Ties in the maximum resolve to the smallest depth index; every pixel
    satisfies ``source[..., index[a, b], ...] == intensity[a, b]``.
    """

    intensity: np.ndarray
    index: np.ndarray
    axis: str
    source_dims: Dims

    def __post_init__(self):
        inten = np.ascontiguousarray(np.asarray(self.intensity, dtype=np.float32))
        index = np.ascontiguousarray(np.asarray(self.index, dtype=np.int32))
        ax = _check_axis(self.axis)
        dims = tuple(int(d) for d in self.source_dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValidationError(f"source_dims must be 3 positive integers, got {dims}")
        expected = tuple(d for i, d in enumerate(dims) if i != ax)
        if inten.shape != expected or index.shape != expected:
            raise DimsMismatchError(
                f"projection arrays must have shape {expected}, got "
                f"{inten.shape} and {index.shape}"
            )
        if index.size and (index.min() < 0 or index.max() >= dims[ax]):
            raise ValidationError(f"index map values must lie in [0, {dims[ax]})")
        inten.flags.writeable = False
        index.flags.writeable = False
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "source_dims", dims)

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensity.shape


@dataclass(frozen=True)
class Mask2D:
    """Binary annotation image aligned with a projection."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.bits).astype(bool))
        if arr.ndim != 2:
            raise ValidationError(f"mask must be 2D, got ndim={arr.ndim}")
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape


def mip_project(volume: ScalarVolume3D, axis: str = "z") -> Mip2D:
    """Project along ``axis``, recording the first depth that attains the max."""
    ax = _check_axis(axis)
    intensity = volume.data.max(axis=ax)
    index = volume.data.argmax(axis=ax).astype(np.int32)
    return Mip2D(intensity, index, axis, volume.dims)


def back_project(mask: Mask2D, mip: Mip2D) -> np.ndarray:
    """Lift annotated pixels to 3D seeds through the argmax index map.

    Each set pixel (a, b) yields exactly one voxel, with the projection
    axis coordinate taken from ``mip.index[a, b]``. Returns an (N, 3)
    coordinate array in lexicographic order.
    """
    if mask.shape != mip.shape:
        raise DimsMismatchError(
            f"mask shape {mask.shape} does not match projection shape {mip.shape}"
        )
    ab = np.argwhere(mask.bits)
    if ab.size == 0:
        return empty_coords()
    depth = mip.index[ab[:, 0], ab[:, 1]]
    ax = AXES[mip.axis]
    coords = np.insert(ab, ax, depth, axis=1).astype(np.int64)
    order = np.lexsort((coords[:, 2], coords[:, 1], coords[:, 0]))
    return coords[order]


def export_png(mip: Mip2D, path: str) -> None:
    """Write the projection intensity as a 16-bit grayscale PNG.

    Intensities are rescaled so [min, max] maps onto [0, 65535]; a constant
    image exports as all zeros.
    """
    inten = mip.intensity.astype(np.float64)
    lo, hi = float(inten.min()), float(inten.max())
    if hi > lo:
        scaled = np.rint((inten - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.zeros_like(inten)
    img = Image.fromarray(scaled.astype(np.uint16))
    img.save(path, format="PNG")


def export_mask_png(mask: Mask2D, path: str) -> None:
    """Write a binary mask as an 8-bit grayscale PNG (255 = set)."""
    img = Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")


def import_mask_png(path: str, expected_dims: tuple[int, int]) -> Mask2D:
    """Read an annotation PNG; any nonzero pixel counts as vessel.

    The image is converted to 8-bit grayscale first, so palette or color
    inputs are accepted as long as their size matches ``expected_dims``
    (rows, columns).
    """
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"))
    except FileNotFoundError:
        raise MaskPngError(f"mask file {path!r} not found") from None
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise MaskPngError(f"cannot decode {path!r} as PNG: {exc}") from exc
    expected = tuple(int(d) for d in expected_dims)
    if arr.shape != expected:
        raise MaskPngError(f"mask {path!r} has shape {arr.shape}, expected {expected}")
    return Mask2D(arr != 0)
