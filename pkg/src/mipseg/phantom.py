"""Synthetic tubular phantoms with known ground truth.

Vessels are capsules around polylines with per-control-point radii;
intensities are uniform draws plus optional Gaussian noise, clipped back
into disjoint vessel/background ranges so the brightness separation is
strict by construction. Everything is driven by one seed, and draws cover
the full grid, so outputs do not depend on evaluation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .volume import FG, Dims, ProbabilityVolume, ScalarVolume3D, Spacing, TernaryLabelVolume


@dataclass(frozen=True)
class TubeSpec:
    """One vessel: a polyline of (x, y, z) control points with radii.

    ``radii`` gives the capsule radius at each control point; it is
    interpolated linearly along each segment. A single radius may be given
    for a constant-width tube.
    """

    points: tuple
    radii: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        if len(pts) < 2:
            raise ValidationError("a tube needs at least 2 control points")
        if any(len(p) != 3 for p in pts):
            raise ValidationError("tube control points must be (x, y, z)")
        radii = self.radii
        if isinstance(radii, (int, float)):
            radii = (float(radii),) * len(pts)
        else:
            radii = tuple(float(r) for r in radii)
        if len(radii) == 1:
            radii = radii * len(pts)
        if len(radii) != len(pts):
            raise ValidationError(
                f"need one radius per control point ({len(pts)}), got {len(radii)}"
            )
        if any(not (math.isfinite(r) and r > 0) for r in radii):
            raise ValidationError("tube radii must be positive and finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "radii", radii)


@dataclass(frozen=True)
class PhantomSpec:
    """Grid geometry, tube list, intensity ranges, noise, and seed."""

    dims: Dims
    tubes: tuple
    vessel_range: tuple[float, float] = (0.75, 0.95)
    background_range: tuple[float, float] = (0.05, 0.25)
    noise_std: float = 0.02
    seed: int = 0
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValidationError(f"dims must be 3 positive integers, got {self.dims}")
        tubes = tuple(t if isinstance(t, TubeSpec) else TubeSpec(**t) for t in self.tubes)
        if not tubes:
            raise ValidationError("a phantom needs at least one tube")
        v_lo, v_hi = (float(v) for v in self.vessel_range)
        b_lo, b_hi = (float(v) for v in self.background_range)
        if not (0 <= b_lo < b_hi and b_hi < v_lo < v_hi):
            raise ValidationError(
                "ranges must satisfy 0 <= bg_lo < bg_hi < vessel_lo < vessel_hi, got "
                f"background {self.background_range} and vessel {self.vessel_range}"
            )
        if not (math.isfinite(self.noise_std) and self.noise_std >= 0):
            raise ValidationError(f"noise_std must be nonnegative, got {self.noise_std}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "tubes", tubes)
        object.__setattr__(self, "vessel_range", (v_lo, v_hi))
        object.__setattr__(self, "background_range", (b_lo, b_hi))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        known = {"dims", "tubes", "vessel_range", "background_range",
                 "noise_std", "seed", "spacing"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown phantom spec fields: {sorted(unknown)}")
        if "dims" not in d or "tubes" not in d:
            raise ValidationError("phantom spec needs at least 'dims' and 'tubes'")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str) -> "PhantomSpec":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"phantom spec {path!r} not found") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"phantom spec {path!r} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ValidationError(f"phantom spec {path!r} must be a JSON object")
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "tubes": [{"points": [list(p) for p in t.points], "radii": list(t.radii)}
                      for t in self.tubes],
            "vessel_range": list(self.vessel_range),
            "background_range": list(self.background_range),
            "noise_std": self.noise_std,
            "seed": self.seed,
            "spacing": list(self.spacing),
        }


def _check_tube_inside(tube: TubeSpec, dims: Dims) -> None:
    for p, r in zip(tube.points, tube.radii):
        for c, d in zip(p, dims):
            if c - r < -0.5 or c + r > d - 0.5:
                raise ValidationError(
                    f"tube control point {p} with radius {r} exceeds grid of dims {dims}"
                )


def rasterize_tubes(spec: PhantomSpec) -> np.ndarray:
    """Boolean mask of voxels inside any tube capsule."""
    dims = spec.dims
    gx, gy, gz = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    mask = np.zeros(dims, dtype=bool)
    for tube in spec.tubes:
        _check_tube_inside(tube, dims)
        for (p0, p1), (r0, r1) in zip(
            zip(tube.points[:-1], tube.points[1:]), zip(tube.radii[:-1], tube.radii[1:])
        ):
            p0 = np.asarray(p0)
            p1 = np.asarray(p1)
            seg = p1 - p0
            seg_len2 = float(seg @ seg)
            if seg_len2 == 0.0:
                t = np.zeros(dims)
            else:
                t = ((gx - p0[0]) * seg[0] + (gy - p0[1]) * seg[1] + (gz - p0[2]) * seg[2])
                t = np.clip(t / seg_len2, 0.0, 1.0)
            dx = gx - (p0[0] + t * seg[0])
            dy = gy - (p0[1] + t * seg[1])
            dz = gz - (p0[2] + t * seg[2])
            radius = r0 + t * (r1 - r0)
            mask |= dx * dx + dy * dy + dz * dz <= radius * radius
    return mask


def generate(spec: PhantomSpec) -> tuple[ScalarVolume3D, TernaryLabelVolume]:
    """Render the phantom volume and its binary ground truth.

    Same spec, same output: the RNG is seeded from the spec and every draw
    covers the full grid. Clipping after noise keeps vessel and background
    intensities inside their disjoint ranges.
    """
    gt = rasterize_tubes(spec)
    v_lo, v_hi = spec.vessel_range
    b_lo, b_hi = spec.background_range
    rng = np.random.default_rng(spec.seed)
    vessel = rng.uniform(v_lo, v_hi, spec.dims)
    background = rng.uniform(b_lo, b_hi, spec.dims)
    noise = rng.normal(0.0, spec.noise_std, spec.dims) if spec.noise_std > 0 else 0.0
    data = np.where(
        gt,
        np.clip(vessel + noise, v_lo, v_hi),
        np.clip(background + noise, b_lo, b_hi),
    )
    volume = ScalarVolume3D(data.astype(np.float32), spec.spacing)
    truth = TernaryLabelVolume(gt.astype(np.uint8) * FG, spec.spacing)
    return volume, truth


def oracle_probabilities(
    truth: TernaryLabelVolume,
    quality: float,
    passes: int = 6,
    pass_noise_std: float = 0.05,
    seed: int = 0,
) -> tuple[ProbabilityVolume, list[ProbabilityVolume]]:
    """Synthetic network outputs consistent with the ground truth.

    The clean map assigns foreground probability ``quality`` on true vessel
    voxels and ``1 - quality`` elsewhere; each stochastic pass adds
    Gaussian noise and clips back to [0, 1]. ``quality`` must exceed 0.5 so
    the argmax matches the truth.
    """
    if not (0.5 < quality <= 1.0):
        raise ValidationError(f"quality must lie in (0.5, 1], got {quality}")
    if passes < 2:
        raise ValidationError(f"need at least 2 passes, got {passes}")
    if not (math.isfinite(pass_noise_std) and pass_noise_std >= 0):
        raise ValidationError(f"pass_noise_std must be nonnegative, got {pass_noise_std}")
    gt = truth.labels == FG
    clean = np.where(gt, quality, 1.0 - quality)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(passes):
        noisy = clean + rng.normal(0.0, pass_noise_std, truth.dims)
        out.append(ProbabilityVolume(np.clip(noisy, 0.0, 1.0).astype(np.float32), truth.spacing))
    return ProbabilityVolume(clean.astype(np.float32), truth.spacing), out
