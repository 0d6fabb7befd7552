"""Occlusion-aware data tooling for virtual try-on pipelines.

The package covers five loosely coupled areas:

* mask algebra for simulating and repairing parsing failures
  (:mod:`occlumix.mask_algebra`),
* garment texture classification by co-occurrence entropy
  (:mod:`occlumix.texture`),
* seeded occlusion copy-paste synthesis (:mod:`occlumix.compose`),
* flow warping, second-order smoothness and reconstruction losses
  (:mod:`occlumix.flow`, :mod:`occlumix.losses`),
* per-region Frechet evaluation and corpus statistics
  (:mod:`occlumix.fid`, :mod:`occlumix.data`).

Everything is exact-arithmetic-friendly: float64 throughout, seeded
`numpy.random.Generator` streams, and byte-stable file formats
(:mod:`occlumix.formats`).
"""

from .compose import (
    OccluMixSample,
    OcclusionDistribution,
    align_partner_cloth,
    compose_occlumix,
    entry_generator,
    load_occlusion_distribution,
    save_occlusion_distribution,
    select_occlusion_region,
    synthesize_batch,
    synthesize_entry,
)
from .core import (
    BinaryMask,
    FlowField,
    FlowPyramid,
    ImageBuffer,
    LabelMap,
    MaskGroups,
    Palette,
    PartRegionMap,
    PoseKeypoints,
    default_pose_sigma,
    extract_class_mask,
    rasterize_pose,
    resize_bilinear,
    resize_nearest,
)
from .data import (
    DatasetManifest,
    ManifestEntry,
    RunConfig,
    corpus_stats,
    load_manifest,
    load_region_sets,
    load_run_config,
    load_texture_pools,
    save_manifest,
    save_texture_pools,
)
from .errors import (
    DegenerateInputError,
    InputValidationError,
    NumericalError,
    OcclumixError,
)
from .fid import (
    FeatureStats,
    RegionReport,
    StatsAccumulator,
    accumulate_stats,
    content_hash,
    frechet_distance,
    region_crop,
    region_fid,
)
from .flow import (
    CharbonnierParams,
    charbonnier,
    second_order_smoothness,
    second_order_term_count,
    warp_by_flow,
)
from .losses import (
    FeatureStack,
    LossWeights,
    builtin_feature_bank,
    builtin_feature_stack,
    combined_loss,
    l1_loss,
    perceptual_loss,
)
from .mask_algebra import (
    SpnSample,
    body_parts_in_tryon,
    build_spn_samples,
    place_defect_mask,
    potential_body_location,
    simulate_parsing_failure,
    strange_fabric,
)
from .texture import (
    GlcmMatrix,
    GlcmParams,
    PartnerDraw,
    TextureClass,
    TexturePools,
    classify_texture,
    compute_glcm,
    glcm_entropy,
    quantize_gray,
    sample_partner,
    to_grayscale,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "CharbonnierParams",
    "DatasetManifest",
    "DegenerateInputError",
    "FeatureStack",
    "FeatureStats",
    "FlowField",
    "FlowPyramid",
    "GlcmMatrix",
    "GlcmParams",
    "ImageBuffer",
    "InputValidationError",
    "LabelMap",
    "LossWeights",
    "ManifestEntry",
    "MaskGroups",
    "NumericalError",
    "OccluMixSample",
    "OcclumixError",
    "OcclusionDistribution",
    "Palette",
    "PartRegionMap",
    "PartnerDraw",
    "PoseKeypoints",
    "RegionReport",
    "RunConfig",
    "SpnSample",
    "StatsAccumulator",
    "TextureClass",
    "TexturePools",
    "accumulate_stats",
    "align_partner_cloth",
    "body_parts_in_tryon",
    "build_spn_samples",
    "builtin_feature_bank",
    "builtin_feature_stack",
    "charbonnier",
    "classify_texture",
    "combined_loss",
    "compose_occlumix",
    "compute_glcm",
    "content_hash",
    "corpus_stats",
    "default_pose_sigma",
    "entry_generator",
    "extract_class_mask",
    "frechet_distance",
    "glcm_entropy",
    "l1_loss",
    "load_manifest",
    "load_occlusion_distribution",
    "load_region_sets",
    "load_run_config",
    "load_texture_pools",
    "perceptual_loss",
    "place_defect_mask",
    "potential_body_location",
    "quantize_gray",
    "rasterize_pose",
    "region_crop",
    "region_fid",
    "resize_bilinear",
    "resize_nearest",
    "sample_partner",
    "save_manifest",
    "save_occlusion_distribution",
    "save_texture_pools",
    "second_order_smoothness",
    "second_order_term_count",
    "select_occlusion_region",
    "simulate_parsing_failure",
    "strange_fabric",
    "synthesize_batch",
    "synthesize_entry",
    "to_grayscale",
    "warp_by_flow",
]
