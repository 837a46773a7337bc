"""Mosaic permutation tests and confidence intervals for panel linear models."""

__version__ = "0.1.0"

from .diagnostics import (
    DiagnosticsReport,
    intervals_overlap,
    lambda_ratio,
    overlap_theoretical,
    run_diagnostics,
    split_folds,
)
from .engine import (
    MosaicResiduals,
    SignAssignment,
    StatWeights,
    TestResult,
    default_weights,
    delta_matrix,
    exact_pvalue,
    mosaic_randomize,
    mosaic_resid,
    mosaic_test,
    quadratic_stat,
)
from .exceptions import (
    BadCluster,
    DegenerateCluster,
    DuplicateCell,
    InvalidAlpha,
    InvalidInvariance,
    InvalidPanel,
    InvalidReplicates,
    MissingCoordinates,
    MosaicError,
    NoLocalVariation,
    NumericalError,
    RankDeficient,
    UnbalancedPanel,
    ValidationError,
    ZeroVariance,
)
from .inference import CiResult, OlsResult, inversion_accepts, mosaic_beta, mosaic_ci, ols_panel
from .invariance import Invariance, InvarianceKind, make_invariance, parse_invariance
from .io import export_long, merge_small_clusters, read_long
from .panel import Clustering, PanelData, augment_design, cluster_fit, residual_df
from .simlab import (
    DgpSpec,
    Family,
    gen_panel,
    run_ci_coverage,
    run_null_calibration,
    run_randomization_vs_marginal,
    run_split_diagnostics,
)

__all__ = [
    "BadCluster",
    "CiResult",
    "Clustering",
    "DegenerateCluster",
    "DgpSpec",
    "DiagnosticsReport",
    "DuplicateCell",
    "Family",
    "InvalidAlpha",
    "InvalidInvariance",
    "InvalidPanel",
    "InvalidReplicates",
    "Invariance",
    "InvarianceKind",
    "MissingCoordinates",
    "MosaicError",
    "MosaicResiduals",
    "NoLocalVariation",
    "NumericalError",
    "OlsResult",
    "PanelData",
    "RankDeficient",
    "SignAssignment",
    "StatWeights",
    "TestResult",
    "UnbalancedPanel",
    "ValidationError",
    "ZeroVariance",
    "augment_design",
    "cluster_fit",
    "default_weights",
    "delta_matrix",
    "exact_pvalue",
    "export_long",
    "gen_panel",
    "intervals_overlap",
    "inversion_accepts",
    "lambda_ratio",
    "make_invariance",
    "merge_small_clusters",
    "mosaic_beta",
    "mosaic_ci",
    "mosaic_randomize",
    "mosaic_resid",
    "mosaic_test",
    "ols_panel",
    "overlap_theoretical",
    "parse_invariance",
    "quadratic_stat",
    "read_long",
    "residual_df",
    "run_ci_coverage",
    "run_diagnostics",
    "run_null_calibration",
    "run_randomization_vs_marginal",
    "run_split_diagnostics",
    "split_folds",
]
