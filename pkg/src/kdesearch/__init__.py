"""Fast conditional kernel density estimation driving an active object search.

The package has three layers:

* density machinery: exact Gaussian KDE, truncated multipole expansions with
  randomized per-cell centers, and feature-space importance clustering;
* situation models: per-category size and location distributions learned from
  bounding-box annotations, re-conditioned as objects are localized;
* an experiment harness: synthetic scene generation, cross-validated
  comparison of conditioning strategies, and timing benchmarks, all behind
  the ``kdesearch`` command-line tool.
"""

__version__ = "0.1.0"

from .dataset import Dataset, SituationImage, SyntheticParams, generate_synthetic, load_annotations, save_annotations
from .errors import (
    ConditioningError,
    DataFormatError,
    DegenerateDataError,
    ExpansionOverflowError,
    KdeSearchError,
    OutsideSupportError,
)
from .experiment import BenchResult, ExperimentReport, bench_density, cross_validate, write_raw
from .geometry import BoundingBox, iou
from .grids import DensityGrid, GridSpec, SparseDensityGrid, delta_grid, total_variation
from .kernels import conditional_kde, gaussian_kernel, kde_estimate, kde_grid, rule_of_thumb_bandwidth
from .multipole import (
    MultipoleExpansion,
    build_expansion,
    conditional_multipole_grid,
    evaluate_expansion,
    gaussian_smooth,
    multipole_grid,
)
from .clustering import ClusterCache, calinski_harabasz, extract_feature, importance_cluster, kmeans, select_model
from .search import EpisodeResult, ObjectProposal, SearchConfig, Workspace, oracle_score, run_episode
from .situation import (
    METHODS,
    MvnModel,
    SituationModel,
    condition_location_distributions,
    condition_size_distributions,
    fit_mvn,
    learn_model,
    mvn_condition,
)

__all__ = [
    "__version__",
    "BenchResult",
    "BoundingBox",
    "ClusterCache",
    "ConditioningError",
    "DataFormatError",
    "Dataset",
    "DegenerateDataError",
    "DensityGrid",
    "EpisodeResult",
    "ExpansionOverflowError",
    "ExperimentReport",
    "GridSpec",
    "KdeSearchError",
    "METHODS",
    "MultipoleExpansion",
    "MvnModel",
    "ObjectProposal",
    "OutsideSupportError",
    "SearchConfig",
    "SituationImage",
    "SituationModel",
    "SparseDensityGrid",
    "SyntheticParams",
    "Workspace",
    "bench_density",
    "build_expansion",
    "calinski_harabasz",
    "conditional_kde",
    "conditional_multipole_grid",
    "condition_location_distributions",
    "condition_size_distributions",
    "cross_validate",
    "delta_grid",
    "evaluate_expansion",
    "extract_feature",
    "fit_mvn",
    "gaussian_kernel",
    "gaussian_smooth",
    "generate_synthetic",
    "importance_cluster",
    "iou",
    "kde_estimate",
    "kde_grid",
    "kmeans",
    "learn_model",
    "load_annotations",
    "multipole_grid",
    "mvn_condition",
    "oracle_score",
    "rule_of_thumb_bandwidth",
    "run_episode",
    "save_annotations",
    "select_model",
    "total_variation",
    "write_raw",
]
