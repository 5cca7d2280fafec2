"""Overlap, topology, and surface-distance metrics for binary volumes.

Skeletonization is sequential directional thinning: border voxels are
deleted one at a time, in lexicographic order within each of six direction
sub-passes, whenever deletion preserves local topology (one foreground
26-component among the neighbors and one face-connected background
6-component in the 18-neighborhood) and the voxel is not a curve endpoint.
Deleting only such voxels keeps the connected-component count intact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimsMismatchError, EmptySetError, UndefinedMetricError, ValidationError
from .refine import _sq_distance_field

_OFF27 = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]
_CENTER = _OFF27.index((0, 0, 0))
_N26_MASK = sum(1 << k for k, off in enumerate(_OFF27) if k != _CENTER)
_N18_MASK = sum(
    1 << k
    for k, off in enumerate(_OFF27)
    if k != _CENTER and abs(off[0]) + abs(off[1]) + abs(off[2]) <= 2
)
_FACE_MASK = sum(
    1 << k for k, off in enumerate(_OFF27) if abs(off[0]) + abs(off[1]) + abs(off[2]) == 1
)


def _adjacency(kind: int) -> list[int]:
    """For each cube position, the bitmask of positions adjacent to it."""
    masks = []
    for k, a in enumerate(_OFF27):
        m = 0
        for j, b in enumerate(_OFF27):
            if j == k:
                continue
            d = (abs(a[0] - b[0]), abs(a[1] - b[1]), abs(a[2] - b[2]))
            if kind == 26 and max(d) == 1:
                m |= 1 << j
            elif kind == 6 and sum(d) == 1:
                m |= 1 << j
        masks.append(m)
    return masks


_ADJ26 = _adjacency(26)
_ADJ6 = _adjacency(6)


def _single_component(bits: int, adj: list[int]) -> bool:
    seed = bits & -bits
    comp = seed
    while True:
        grow = comp
        b = comp
        while b:
            k = (b & -b).bit_length() - 1
            grow |= adj[k] & bits
            b &= b - 1
        if grow == comp:
            return comp == bits
        comp = grow


def _face_connected_bg_components(bits: int) -> int:
    """6-components of the given background bits that touch a face position."""
    count = 0
    rem = bits
    while rem:
        seed = rem & -rem
        comp = seed
        while True:
            grow = comp
            b = comp
            while b:
                k = (b & -b).bit_length() - 1
                grow |= _ADJ6[k] & bits
                b &= b - 1
            if grow == comp:
                break
            comp = grow
        if comp & _FACE_MASK:
            count += 1
        rem &= ~comp
    return count


_SIMPLE_CACHE: dict[int, bool] = {}


def _is_simple(bits: int) -> bool:
    """Whether deleting the center voxel preserves local topology.

    ``bits`` is the 27-bit occupancy of the 3x3x3 neighborhood with the
    center cleared.
    """
    cached = _SIMPLE_CACHE.get(bits)
    if cached is not None:
        return cached
    fg = bits & _N26_MASK
    ok = fg != 0 and _single_component(fg, _ADJ26)
    if ok:
        bg18 = _N18_MASK & ~bits
        ok = _face_connected_bg_components(bg18) == 1
    _SIMPLE_CACHE[bits] = ok
    return ok


_DIRECTIONS = [(0, 0, 1), (0, 0, -1), (0, 1, 0), (0, -1, 0), (1, 0, 0), (-1, 0, 0)]


def skeletonize(mask: np.ndarray) -> np.ndarray:
    """Thin a binary volume to a unit-width centerline skeleton.

    Curve endpoints (voxels with at most one foreground neighbor) are never
    deleted, so a one-voxel-wide line and a single voxel are fixed points.
    The number of 26-connected components is preserved.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 3:
        raise ValidationError(f"expected a 3D mask, got ndim={mask.ndim}")
    if not mask.any():
        return mask.copy()

    pad = np.pad(mask, 1).astype(np.uint8)
    flat = pad.ravel()
    sx, sy, sz = pad.strides[0] // pad.itemsize, pad.strides[1] // pad.itemsize, 1
    noff = [dx * sx + dy * sy + dz * sz for dx, dy, dz in _OFF27]
    weights = [1 << k for k in range(27) if k != _CENTER]
    offs = [noff[k] for k in range(27) if k != _CENTER]

    while True:
        deleted_this_cycle = 0
        for d in _DIRECTIONS:
            # Border voxels whose face neighbor opposite to d is background.
            shifted = np.roll(pad, shift=(-d[0], -d[1], -d[2]), axis=(0, 1, 2))
            cand = np.argwhere((pad == 1) & (shifted == 0))
            doff = d[0] * sx + d[1] * sy + d[2] * sz
            for x, y, z in cand:
                base = x * sx + y * sy + z * sz
                if flat[base] == 0 or flat[base + doff] != 0:
                    continue
                bits = 0
                nfg = 0
                for w, o in zip(weights, offs):
                    if flat[base + o]:
                        bits |= w
                        nfg += 1
                if nfg <= 1:
                    continue
                if _is_simple(bits):
                    flat[base] = 0
                    deleted_this_cycle += 1
        if not deleted_this_cycle:
            break
    return pad[1:-1, 1:-1, 1:-1].astype(bool)


def _check_pair(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.ndim != 3 or truth.ndim != 3:
        raise ValidationError("metrics expect 3D binary masks")
    if pred.shape != truth.shape:
        raise DimsMismatchError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    return pred, truth


def dsc(pred: np.ndarray, truth: np.ndarray) -> float:
    """Dice overlap 2|A∩B| / (|A|+|B|); two empty masks are undefined."""
    pred, truth = _check_pair(pred, truth)
    total = int(pred.sum()) + int(truth.sum())
    if total == 0:
        raise UndefinedMetricError("Dice is undefined when both masks are empty")
    return 2.0 * int((pred & truth).sum()) / total


def cldice(pred: np.ndarray, truth: np.ndarray) -> float:
    """Centerline Dice: harmonic mean of topology precision and sensitivity.

    Precision is the fraction of the predicted skeleton inside the truth
    mask; sensitivity the fraction of the truth skeleton inside the
    prediction. Both masks must be nonempty.
    """
    pred, truth = _check_pair(pred, truth)
    if not pred.any() or not truth.any():
        raise EmptySetError("centerline Dice needs two nonempty masks")
    skel_pred = skeletonize(pred)
    skel_truth = skeletonize(truth)
    tprec = int((skel_pred & truth).sum()) / int(skel_pred.sum())
    tsens = int((skel_truth & pred).sum()) / int(skel_truth.sum())
    if tprec + tsens == 0:
        return 0.0
    return 2.0 * tprec * tsens / (tprec + tsens)


def ahd(pred: np.ndarray, truth: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> float:
    """Average symmetric mask-to-mask distance in physical units.

    Mean over each mask's voxels of the Euclidean distance (anisotropic
    spacing respected) to the nearest voxel of the other mask, averaged
    both ways. Both masks must be nonempty.
    """
    pred, truth = _check_pair(pred, truth)
    if not pred.any() or not truth.any():
        raise EmptySetError("average distance needs two nonempty masks")
    d_to_truth = np.sqrt(_sq_distance_field(truth, spacing))
    d_to_pred = np.sqrt(_sq_distance_field(pred, spacing))
    forward = float(d_to_truth[pred].mean(dtype=np.float64))
    backward = float(d_to_pred[truth].mean(dtype=np.float64))
    return 0.5 * (forward + backward)


def component_count(mask: np.ndarray) -> int:
    """Number of 26-connected foreground components."""
    structure = ndimage.generate_binary_structure(3, 3)
    _, n = ndimage.label(np.asarray(mask).astype(bool), structure=structure)
    return int(n)


@dataclass(frozen=True)
class MetricReport:
    """Overlap, centerline, and distance scores for one prediction."""

    dsc: float
    cldice: float
    ahd: float
    true_positive: int
    false_positive: int
    false_negative: int

    def to_dict(self) -> dict:
        return {
            "dsc": self.dsc,
            "cldice": self.cldice,
            "ahd": self.ahd,
            "true_positive": self.true_positive,
            "false_positive": self.false_positive,
            "false_negative": self.false_negative,
        }


def evaluate(pred: np.ndarray, truth: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> MetricReport:
    """All three metrics plus voxel counts in one report."""
    pred, truth = _check_pair(pred, truth)
    return MetricReport(
        dsc=dsc(pred, truth),
        cldice=cldice(pred, truth),
        ahd=ahd(pred, truth, spacing),
        true_positive=int((pred & truth).sum()),
        false_positive=int((pred & ~truth).sum()),
        false_negative=int((~pred & truth).sum()),
    )
