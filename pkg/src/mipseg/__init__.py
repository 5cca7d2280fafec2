"""Weakly supervised 3D vessel segmentation from 2D projection annotations.

The pipeline: project a volume to a maximum-intensity image, annotate the
projection once, lift the annotation back to 3D seeds, grow them into a
ternary pseudo-label, and refine the labels with confidence statistics and
stochastic-pass entropy. Losses, vessel metrics, MetaImage I/O, and a
synthetic phantom generator round out the toolkit.
"""

from .errors import (
    DegenerateClError,
    DegenerateRangeError,
    DimsMismatchError,
    EmptyClassError,
    EmptySetError,
    MaskPngError,
    MetaImageError,
    MipSegError,
    MissingPayloadError,
    NonFiniteDataError,
    PayloadSizeError,
    UndefinedMetricError,
    UnsupportedElementTypeError,
    ValidationError,
)
from .fusion import (
    FeatureGrid2D,
    FeatureGrid3D,
    IndexMapPyramidLevel,
    downscale_index,
    feature_retrieve,
    loss_2d,
    loss_3d,
    loss_all,
)
from .metrics import MetricReport, ahd, cldice, component_count, dsc, evaluate, skeletonize
from .phantom import PhantomSpec, TubeSpec, generate, oracle_probabilities, rasterize_tubes
from .projection import (
    Mask2D,
    Mip2D,
    back_project,
    export_mask_png,
    export_png,
    import_mask_png,
    mip_project,
)
from .pseudolabel import (
    BackgroundConfig,
    GrowConfig,
    assemble_pseudolabel,
    build_background,
    foreground_mean,
    region_grow,
)
from .refine import (
    ClState,
    RefineConfig,
    RefinementReport,
    UncertaintyField,
    cl_add,
    count_and_joint,
    distance_field,
    distance_to_set,
    latent_sets,
    mc_aggregate,
    pbnr_remove,
    refine_round,
    ue_add,
)
from .volume import (
    BG,
    FG,
    UNLABELED,
    ProbabilityVolume,
    ScalarVolume3D,
    TernaryLabelVolume,
    crop_or_pad,
    load_label_volume,
    load_probability_volume,
    load_volume,
    normalize_intensity,
    save_volume,
)
from .voxels import as_coords, coords_to_mask, empty_coords, mask_to_coords

__version__ = "0.1.0"

__all__ = [
    "BG",
    "FG",
    "UNLABELED",
    "BackgroundConfig",
    "ClState",
    "DegenerateClError",
    "DegenerateRangeError",
    "DimsMismatchError",
    "EmptyClassError",
    "EmptySetError",
    "FeatureGrid2D",
    "FeatureGrid3D",
    "GrowConfig",
    "IndexMapPyramidLevel",
    "Mask2D",
    "MaskPngError",
    "MetaImageError",
    "MetricReport",
    "Mip2D",
    "MipSegError",
    "MissingPayloadError",
    "NonFiniteDataError",
    "PayloadSizeError",
    "PhantomSpec",
    "ProbabilityVolume",
    "RefineConfig",
    "RefinementReport",
    "ScalarVolume3D",
    "TernaryLabelVolume",
    "TubeSpec",
    "UncertaintyField",
    "UndefinedMetricError",
    "UnsupportedElementTypeError",
    "ValidationError",
    "ahd",
    "as_coords",
    "assemble_pseudolabel",
    "back_project",
    "build_background",
    "cl_add",
    "cldice",
    "component_count",
    "coords_to_mask",
    "count_and_joint",
    "crop_or_pad",
    "distance_field",
    "distance_to_set",
    "downscale_index",
    "dsc",
    "empty_coords",
    "evaluate",
    "export_mask_png",
    "export_png",
    "feature_retrieve",
    "foreground_mean",
    "generate",
    "import_mask_png",
    "latent_sets",
    "load_label_volume",
    "load_probability_volume",
    "load_volume",
    "loss_2d",
    "loss_3d",
    "loss_all",
    "mask_to_coords",
    "mc_aggregate",
    "mip_project",
    "normalize_intensity",
    "oracle_probabilities",
    "pbnr_remove",
    "rasterize_tubes",
    "refine_round",
    "region_grow",
    "save_volume",
    "skeletonize",
    "ue_add",
]
