"""One round of pseudo-label refinement.

Suspect labels are found by comparing each class's labels against the
class-conditional confidence thresholds of a probability map, counted into
a joint label-error distribution, and the worst-margin offenders removed.
Removed voxels may be re-admitted to the opposite class under conservative
intensity/distance priors; unlabeled voxels with low predictive entropy
across stochastic forward passes may be added under the same priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    DegenerateClError,
    DimsMismatchError,
    EmptyClassError,
    EmptySetError,
    ValidationError,
)
from .volume import BG, FG, UNLABELED, Dims, ProbabilityVolume, ScalarVolume3D, TernaryLabelVolume
from .voxels import as_coords, coords_to_mask, empty_coords, mask_to_coords


@dataclass(frozen=True)
class RefineConfig:
    """Refinement knobs.

    ``passes`` is the number of stochastic forward passes expected by the
    aggregation step. ``pass_noise_mean``/``pass_noise_std`` describe the
    perturbation used to produce those passes; they are carried for
    provenance and for phantom-driven runs. ``cl_*`` thresholds gate
    re-admission of removed voxels, ``ue_*`` thresholds gate additions of
    unlabeled voxels; distances are in voxel units against the original
    foreground set, intensity cutoffs are coefficients on the seed-mean
    intensity. ``disable_priors`` makes every gate pass, for data whose
    thin structures defeat intensity/distance assumptions.
    """

    passes: int = 6
    pass_noise_mean: float = 0.0
    pass_noise_std: float = 0.1
    cl_distance_max: float = 1.5
    ue_distance_max: float = 4.0
    cl_intensity_coef: float = 0.7
    ue_intensity_coef: float = 0.2
    disable_priors: bool = False

    def __post_init__(self):
        if self.passes < 2:
            raise ValidationError(f"passes must be at least 2, got {self.passes}")
        if not (np.isfinite(self.pass_noise_std) and self.pass_noise_std >= 0):
            raise ValidationError(f"pass_noise_std must be nonnegative, got {self.pass_noise_std}")
        if not np.isfinite(self.pass_noise_mean):
            raise ValidationError(f"pass_noise_mean must be finite, got {self.pass_noise_mean}")
        if not self.disable_priors:
            for name in ("cl_distance_max", "ue_distance_max",
                         "cl_intensity_coef", "ue_intensity_coef"):
                v = getattr(self, name)
                if not (np.isfinite(v) and v > 0):
                    raise ValidationError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class ClState:
    """Label-error statistics for one refinement round.

    ``count_matrix[i][j]`` is the calibrated count of voxels labeled i whose
    confident prediction is j; ``joint`` is its normalization to a
    distribution; ``removal_quota[i]`` is how many class-i labels to drop.
    """

    thresholds: tuple[float, float]
    intersections: np.ndarray
    labeled_counts: tuple[int, int]
    count_matrix: np.ndarray
    joint: np.ndarray
    removal_quota: tuple[int, int]


@dataclass(frozen=True)
class UncertaintyField:
    """Per-voxel predictive entropy in bits, plus per-class means once known."""

    u: np.ndarray
    u_ave: tuple[float, float] | None = None


def _class_masks(labels: TernaryLabelVolume) -> tuple[np.ndarray, np.ndarray]:
    lab = labels.labels
    m_bg = lab == BG
    m_fg = lab == FG
    if not m_bg.any():
        raise EmptyClassError("no background labels present")
    if not m_fg.any():
        raise EmptyClassError("no foreground labels present")
    return m_bg, m_fg


def _check_same_dims(dims: Dims, *others) -> None:
    for name, other in others:
        if tuple(other) != tuple(dims):
            raise DimsMismatchError(f"{name} dims {tuple(other)} do not match {tuple(dims)}")


def _latent_masks(
    m_bg: np.ndarray, m_fg: np.ndarray, pf: np.ndarray, t: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Confidently-background / confidently-foreground masks over labeled voxels."""
    labeled = m_bg | m_fg
    pred_fg = pf >= 0.5
    s1_star = labeled & pred_fg & (pf > t[1])
    s0_star = labeled & ~pred_fg & ((1.0 - pf) > t[0])
    return s0_star, s1_star


def latent_sets(
    labels: TernaryLabelVolume, p: ProbabilityVolume
) -> tuple[np.ndarray, np.ndarray, tuple[float, float]]:
    """Per-class confidence thresholds and the confident voxel sets.

    The class threshold is the mean predicted probability of that class over
    its labeled voxels; a labeled voxel is confidently class i when i is its
    argmax (ties to foreground) and its class-i probability strictly exceeds
    the threshold. Returns (confident bg, confident fg, thresholds) with the
    sets as coordinate arrays.
    """
    _check_same_dims(labels.dims, ("probability", p.dims))
    m_bg, m_fg = _class_masks(labels)
    pf = p.p_fg.astype(np.float64)
    t0 = float((1.0 - pf)[m_bg].mean())
    t1 = float(pf[m_fg].mean())
    s0_star, s1_star = _latent_masks(m_bg, m_fg, pf, (t0, t1))
    return mask_to_coords(s0_star), mask_to_coords(s1_star), (t0, t1)


def count_and_joint(
    labels: TernaryLabelVolume, s0_star, s1_star, thresholds: tuple[float, float] = (math.nan, math.nan)
) -> ClState:
    """Calibrated label/confident-prediction count matrix and its joint.

    Rows are the given label, columns the confident prediction. Each row of
    raw intersection counts is rescaled to sum to the class's labeled count
    (zero rows stay zero), then the whole matrix is normalized to sum to 1.
    The removal quota for class i is ``floor(n_labeled * joint[i][1 - i])``,
    computed in exact rational arithmetic.
    """
    m_bg, m_fg = _class_masks(labels)
    star = [coords_to_mask(as_coords(s0_star), labels.dims),
            coords_to_mask(as_coords(s1_star), labels.dims)]
    cls = [m_bg, m_fg]
    inter = np.array(
        [[int((cls[i] & star[j]).sum()) for j in (0, 1)] for i in (0, 1)], dtype=np.int64
    )
    if int(inter.sum()) == 0:
        raise DegenerateClError(
            "no labeled voxel is confidently predicted; label-error rates are unidentifiable"
        )
    counts = (int(m_bg.sum()), int(m_fg.sum()))
    n_labeled = counts[0] + counts[1]

    ctilde = [[Fraction(0), Fraction(0)] for _ in (0, 1)]
    for i in (0, 1):
        row = int(inter[i].sum())
        if row:
            for j in (0, 1):
                ctilde[i][j] = Fraction(int(inter[i][j]), row) * counts[i]
    total = sum(ctilde[0]) + sum(ctilde[1])
    joint = [[ctilde[i][j] / total for j in (0, 1)] for i in (0, 1)]
    quota = tuple(math.floor(n_labeled * joint[i][1 - i]) for i in (0, 1))

    return ClState(
        thresholds=(float(thresholds[0]), float(thresholds[1])),
        intersections=inter,
        labeled_counts=counts,
        count_matrix=np.array([[float(v) for v in row] for row in ctilde]),
        joint=np.array([[float(v) for v in row] for row in joint]),
        removal_quota=quota,
    )


def pbnr_remove(
    labels: TernaryLabelVolume,
    p: ProbabilityVolume,
    state: ClState,
    conflicts=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Worst-margin removal sets per class, plus any assembly conflicts.

    Candidates for removal from class i are its labeled voxels confidently
    predicted as the opposite class; they are ranked by the margin
    ``p(opposite) - p(labeled)`` descending (ties by linear index) and the
    top ``removal_quota[i]`` taken. Conflict voxels are appended to both
    removal sets. Returns (removed from bg, removed from fg).
    """
    _check_same_dims(labels.dims, ("probability", p.dims))
    m_bg, m_fg = _class_masks(labels)
    pf = p.p_fg.astype(np.float64)
    t = (float((1.0 - pf)[m_bg].mean()), float(pf[m_fg].mean()))
    s0_star, s1_star = _latent_masks(m_bg, m_fg, pf, t)
    star = [s0_star, s1_star]
    cls = [m_bg, m_fg]
    prob = [1.0 - pf, pf]

    conflict_mask = coords_to_mask(as_coords(conflicts) if conflicts is not None else empty_coords(),
                                   labels.dims)
    removed = []
    for i in (0, 1):
        cand = cls[i] & star[1 - i]
        lin = np.flatnonzero(cand.ravel())
        margin = (prob[1 - i] - prob[i]).ravel()[lin]
        order = np.lexsort((lin, -margin))
        keep = lin[order][: state.removal_quota[i]]
        mask = np.zeros(labels.dims, dtype=bool)
        mask.ravel()[keep] = True
        removed.append(mask_to_coords(mask | conflict_mask))
    return removed[0], removed[1]


def _sq_distance_field(mask: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Exact squared Euclidean distance to the set, separable per axis.

    Each pass solves the 1D problem by direct minimization over the axis,
    vectorized across rows and chunked to bound memory; O(total * n) per
    axis, exact in float64.
    """
    huge = 1e30
    d = np.where(mask, 0.0, huge)
    for ax in range(3):
        n = mask.shape[ax]
        if n == 1:
            continue
        w2 = float(spacing[ax]) ** 2
        moved = np.moveaxis(d, ax, -1)
        shape = moved.shape
        rows = np.ascontiguousarray(moved).reshape(-1, n)
        k = np.arange(n, dtype=np.float64)
        sq = (k[:, None] - k[None, :]) ** 2 * w2
        out = np.empty_like(rows)
        chunk = max(1, 4_000_000 // (n * n))
        for start in range(0, rows.shape[0], chunk):
            block = rows[start : start + chunk]
            out[start : start + chunk] = (block[:, :, None] + sq[None, :, :]).min(axis=1)
        d = np.moveaxis(out.reshape(shape), -1, ax)
    return d


def distance_field(mask: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Euclidean distance from every voxel to the nearest set voxel."""
    if mask.ndim != 3:
        raise ValidationError(f"distance field needs a 3D mask, got ndim={mask.ndim}")
    if not mask.any():
        raise EmptySetError("distance to an empty set is undefined")
    return np.sqrt(_sq_distance_field(mask.astype(bool), spacing))


def distance_to_set(dims: Dims, coords, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Distance field over a grid of ``dims`` to a coordinate set."""
    dims = tuple(int(d) for d in dims)
    return distance_field(coords_to_mask(as_coords(coords), dims), spacing)


def cl_add(
    volume: ScalarVolume3D,
    removals: tuple[np.ndarray, np.ndarray],
    s1,
    v_ave: float,
    cfg: RefineConfig,
    dist: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Re-admit removed voxels to the opposite class under priors.

    A voxel removed from foreground joins background when its intensity is
    below ``cl_intensity_coef * v_ave``; a voxel removed from background
    joins foreground when it lies within ``cl_distance_max`` voxels of the
    original foreground set. ``disable_priors`` admits all of both.
    Returns (additions to bg, additions to fg).
    """
    s0_re = as_coords(removals[0])
    s1_re = as_coords(removals[1])
    if cfg.disable_priors:
        return s1_re.copy(), s0_re.copy()

    if s1_re.shape[0]:
        vals = volume.data[s1_re[:, 0], s1_re[:, 1], s1_re[:, 2]].astype(np.float64)
        s0_add = s1_re[vals < cfg.cl_intensity_coef * v_ave]
    else:
        s0_add = empty_coords()

    if s0_re.shape[0]:
        if dist is None:
            dist = distance_to_set(volume.dims, s1)
        dvals = dist[s0_re[:, 0], s0_re[:, 1], s0_re[:, 2]]
        s1_add = s0_re[dvals < cfg.cl_distance_max]
    else:
        s1_add = empty_coords()
    return s0_add, s1_add


def mc_aggregate(
    p: ProbabilityVolume, passes: list[ProbabilityVolume]
) -> tuple[ProbabilityVolume, UncertaintyField]:
    """Mean probability over stochastic passes and its binary entropy.

    Entropy is computed in bits from the float64 pass mean with the
    convention 0*log2(0) = 0, so it lies in [0, 1] and is 0 exactly when
    the mean is 0 or 1.
    """
    if len(passes) < 2:
        raise ValidationError(f"need at least 2 stochastic passes, got {len(passes)}")
    _check_same_dims(p.dims, *((f"pass {i}", q.dims) for i, q in enumerate(passes)))
    stack = np.stack([q.p_fg for q in passes]).astype(np.float64)
    m1 = np.clip(stack.mean(axis=0), 0.0, 1.0)
    m0 = 1.0 - m1
    with np.errstate(divide="ignore", invalid="ignore"):
        u = -(np.where(m1 > 0, m1 * np.log2(m1), 0.0) + np.where(m0 > 0, m0 * np.log2(m0), 0.0))
    u = np.maximum(u, 0.0)
    dp = ProbabilityVolume(m1.astype(np.float32), p.spacing)
    return dp, UncertaintyField(u=np.ascontiguousarray(u))


def ue_add(
    labels: TernaryLabelVolume,
    volume: ScalarVolume3D,
    p: ProbabilityVolume,
    dp: ProbabilityVolume,
    field: UncertaintyField,
    s1,
    v_ave: float,
    cfg: RefineConfig,
    dist: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, tuple[float, float]]:
    """Low-entropy additions from the unlabeled region, gated by priors.

    For each class, the candidates are unlabeled voxels whose clean and
    pass-mean argmax agree on that class; those strictly below the mean
    entropy of the candidates join it, subject to the intensity prior for
    background and the distance prior for foreground. Returns the two add
    sets and the per-class mean entropies (NaN where no candidates agree).
    """
    _check_same_dims(labels.dims, ("volume", volume.dims), ("probability", p.dims),
                     ("pass mean", dp.dims), ("entropy", field.u.shape))
    unlabeled = labels.labels == UNLABELED
    pred_clean = p.p_fg.astype(np.float64) >= 0.5
    pred_dp = dp.p_fg.astype(np.float64) >= 0.5
    u = field.u

    if not cfg.disable_priors:
        if dist is None:
            dist = distance_to_set(labels.dims, s1)
        priors = [volume.data.astype(np.float64) < cfg.ue_intensity_coef * v_ave,
                  dist < cfg.ue_distance_max]
    else:
        priors = [np.ones(labels.dims, dtype=bool)] * 2

    adds = []
    u_ave = []
    for i in (0, 1):
        want = bool(i)
        agree = unlabeled & (pred_clean == want) & (pred_dp == want)
        if not agree.any():
            adds.append(empty_coords())
            u_ave.append(math.nan)
            continue
        mean_u = float(u[agree].mean(dtype=np.float64))
        u_ave.append(mean_u)
        adds.append(mask_to_coords(agree & (u < mean_u) & priors[i]))
    return adds[0], adds[1], (u_ave[0], u_ave[1])


@dataclass(frozen=True)
class RefinementReport:
    """Counts and statistics describing what one refinement round did."""

    thresholds: tuple[float, float]
    intersections: tuple[tuple[int, int], tuple[int, int]] | None
    count_matrix: tuple[tuple[float, float], tuple[float, float]] | None
    joint: tuple[tuple[float, float], tuple[float, float]] | None
    removal_quota: tuple[int, int]
    removed: tuple[int, int]
    re_added: tuple[int, int]
    added_low_entropy: tuple[int, int]
    mean_entropy: tuple[float, float]
    conflicts: int
    degenerate_statistics: bool
    labeled_before: tuple[int, int]
    labeled_after: tuple[int, int]

    def to_dict(self) -> dict:
        def _clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            if isinstance(v, tuple):
                return [_clean(x) for x in v]
            return v

        return {
            "thresholds": _clean(self.thresholds),
            "intersections": _clean(self.intersections),
            "count_matrix": _clean(self.count_matrix),
            "joint": _clean(self.joint),
            "removal_quota": _clean(self.removal_quota),
            "removed": _clean(self.removed),
            "re_added": _clean(self.re_added),
            "added_low_entropy": _clean(self.added_low_entropy),
            "mean_entropy": _clean(self.mean_entropy),
            "conflicts": self.conflicts,
            "degenerate_statistics": self.degenerate_statistics,
            "labeled_before": _clean(self.labeled_before),
            "labeled_after": _clean(self.labeled_after),
        }


def _tuple2(arr: np.ndarray) -> tuple:
    return tuple(tuple(row) for row in arr.tolist())


def refine_round(
    labels: TernaryLabelVolume,
    volume: ScalarVolume3D,
    p: ProbabilityVolume,
    passes: list[ProbabilityVolume],
    cfg: RefineConfig = RefineConfig(),
    v_ave: float | None = None,
    conflicts=None,
) -> tuple[TernaryLabelVolume, RefinementReport]:
    """Run one full refinement round and report what changed.

    ``v_ave`` defaults to the mean intensity of the foreground-labeled
    voxels; pass the seed-mean from pseudo-label generation when available.
    ``conflicts`` are voxels contested at assembly time; they count as
    removed from both classes. If the label-error statistics are
    unidentifiable, removal and re-admission degrade to the conflicts alone
    and the entropy-gated additions still apply.
    """
    dims = labels.dims
    _check_same_dims(dims, ("volume", volume.dims), ("probability", p.dims))
    m_bg, m_fg = _class_masks(labels)
    conflicts = as_coords(conflicts) if conflicts is not None else empty_coords()

    if v_ave is None:
        v_ave = float(volume.data[m_fg].mean(dtype=np.float64))
    s1_coords = mask_to_coords(m_fg)

    degenerate = False
    state = None
    try:
        s0_star, s1_star, thresholds = latent_sets(labels, p)
        state = count_and_joint(labels, s0_star, s1_star, thresholds)
        s0_re, s1_re = pbnr_remove(labels, p, state, conflicts)
    except DegenerateClError:
        degenerate = True
        pf = p.p_fg.astype(np.float64)
        thresholds = (float((1.0 - pf)[m_bg].mean()), float(pf[m_fg].mean()))
        s0_re, s1_re = conflicts.copy(), conflicts.copy()

    dist = None
    if not cfg.disable_priors:
        dist = distance_to_set(dims, s1_coords)
    s0_add1, s1_add1 = cl_add(volume, (s0_re, s1_re), s1_coords, v_ave, cfg, dist)
    dp, field = mc_aggregate(p, passes)
    s0_add2, s1_add2, u_ave = ue_add(labels, volume, p, dp, field, s1_coords, v_ave, cfg, dist)

    re0 = coords_to_mask(s0_re, dims)
    re1 = coords_to_mask(s1_re, dims)
    new_bg = ((m_bg | coords_to_mask(s0_add1, dims)) & ~re0) | coords_to_mask(s0_add2, dims)
    new_fg = ((m_fg | coords_to_mask(s1_add1, dims)) & ~re1) | coords_to_mask(s1_add2, dims)
    assert not (new_bg & new_fg).any(), "refined classes must stay disjoint"

    out = np.full(dims, UNLABELED, dtype=np.uint8)
    out[new_bg] = BG
    out[new_fg] = FG
    refined = TernaryLabelVolume(out, labels.spacing)

    report = RefinementReport(
        thresholds=thresholds,
        intersections=_tuple2(state.intersections) if state else None,
        count_matrix=_tuple2(state.count_matrix) if state else None,
        joint=_tuple2(state.joint) if state else None,
        removal_quota=state.removal_quota if state else (0, 0),
        removed=(int(s0_re.shape[0]), int(s1_re.shape[0])),
        re_added=(int(s0_add1.shape[0]), int(s1_add1.shape[0])),
        added_low_entropy=(int(s0_add2.shape[0]), int(s1_add2.shape[0])),
        mean_entropy=u_ave,
        conflicts=int(conflicts.shape[0]),
        degenerate_statistics=degenerate,
        labeled_before=(int(m_bg.sum()), int(m_fg.sum())),
        labeled_after=(int(new_bg.sum()), int(new_fg.sum())),
    )
    return refined, report
