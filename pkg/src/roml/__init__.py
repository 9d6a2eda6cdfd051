"""Robust multi-image feature matching via low-rank and sparse optimization.

Selects and aligns a common subset of feature columns across K feature
sets by optimizing one partial permutation per set, so that the aligned
features stack into a matrix decomposable into low-rank plus sparse parts.
Includes the alternating solver, a convex low-rank/sparse decomposition,
inlier-count estimation and true-inlier detection, a Laplacian embedding
front-end, synthetic benchmarks with exact small-instance oracles, and a
command line interface.
"""

from .bench import (
    GroundTruth,
    SyntheticSpec,
    brute_force_miap,
    detection_precision_recall,
    generate,
    generate_rank4_coords,
    match_identification_ratios,
    recovery_rate,
)
from .core import (
    COORDINATE,
    DESCRIPTOR,
    FeatureSet,
    MatchReport,
    PartialPermutation,
    RomlConfig,
    assemble_d,
    canonicalize,
    emphasize_first,
    normalize_features,
    solve_roml,
)
from .embed import (
    AffinityMatrix,
    PointSet,
    build_affinity,
    descriptor_affinity,
    laplacian_embed,
    spatial_affinity,
)
from .exceptions import InfeasibleError, NumericalError, OversizeError, RomlError
from .lsap import brute_force_lsap, kernel_name, solve_lsap
from .prox import nuclear_norm, soft_threshold, svt
from .rpca import RpcaConfig, RpcaResult, solve_rpca
from .select import (
    InlierCountEstimate,
    InlierMask,
    detect_true_inliers,
    estimate_inlier_count,
    per_correspondence_nuclear,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityMatrix",
    "COORDINATE",
    "DESCRIPTOR",
    "FeatureSet",
    "GroundTruth",
    "InfeasibleError",
    "InlierCountEstimate",
    "InlierMask",
    "MatchReport",
    "NumericalError",
    "OversizeError",
    "PartialPermutation",
    "PointSet",
    "RomlConfig",
    "RomlError",
    "RpcaConfig",
    "RpcaResult",
    "SyntheticSpec",
    "assemble_d",
    "brute_force_lsap",
    "brute_force_miap",
    "build_affinity",
    "canonicalize",
    "descriptor_affinity",
    "detect_true_inliers",
    "detection_precision_recall",
    "emphasize_first",
    "estimate_inlier_count",
    "generate",
    "generate_rank4_coords",
    "kernel_name",
    "laplacian_embed",
    "match_identification_ratios",
    "normalize_features",
    "nuclear_norm",
    "per_correspondence_nuclear",
    "recovery_rate",
    "soft_threshold",
    "solve_lsap",
    "solve_roml",
    "solve_rpca",
    "spatial_affinity",
    "svt",
]
