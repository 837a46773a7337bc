"""Split-sample diagnostics for standard errors and interval overlap.

Clusters are split into two spatially coherent folds; every method is fit on
each fold, and the pair of fits is summarized by the ratio
``(b1 - b2)^2 / (se1^2 + se2^2)`` (about one when the standard errors are
honest) and by whether the two level-alpha intervals overlap, compared to the
overlap probability implied by asymptotic normality.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from .exceptions import MissingCoordinates, MosaicError, ValidationError, ZeroVariance
from .inference import mosaic_ci, ols_panel
from .invariance import make_invariance
from .panel import Clustering, PanelData
from .rng import child_seeds


@dataclass(frozen=True)
class FoldSplit:
    fold1: tuple[int, ...]
    fold2: tuple[int, ...]
    anchor: int


def _coord_matrix(coords, M: int) -> np.ndarray:
    if isinstance(coords, Mapping):
        missing = [m for m in range(M) if m not in coords]
        if missing:
            raise MissingCoordinates(f"no coordinates for clusters {missing}")
        mat = np.array([np.atleast_1d(np.asarray(coords[m], dtype=float)) for m in range(M)])
    else:
        mat = np.asarray(coords, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
    if mat.shape[0] != M:
        raise MissingCoordinates(f"got coordinates for {mat.shape[0]} clusters, expected {M}")
    if not np.all(np.isfinite(mat)):
        raise MissingCoordinates("coordinates contain missing or non-finite values")
    return mat


def split_folds(
    clustering: Clustering | int, coords, seed: int, anchor: int | None = None
) -> FoldSplit:
    """Split clusters into the ``floor(M/2)`` nearest a random anchor and the rest.

    Parameters
    ----------
    clustering : Clustering or int
        The partition, or just its number of clusters ``M``.
    coords : array (M,) or (M, k), or mapping cluster -> vector
        Cluster locations; Euclidean distance, ties broken by cluster index.
    seed : int
        Selects the anchor.
    anchor : int, optional
        Fix the anchor cluster instead of drawing it.
    """
    M = clustering if isinstance(clustering, int) else clustering.M
    mat = _coord_matrix(coords, M)
    if anchor is None:
        anchor = int(np.random.default_rng(seed).integers(M))
    dist = np.linalg.norm(mat - mat[anchor], axis=1)
    others = [m for m in np.lexsort((np.arange(M), dist)) if m != anchor]
    k = M // 2
    fold1 = tuple(sorted([anchor] + [int(m) for m in others[: k - 1]]))
    fold2 = tuple(m for m in range(M) if m not in set(fold1))
    return FoldSplit(fold1, fold2, anchor)


def lambda_ratio(b1: float, se1: float, b2: float, se2: float) -> float:
    """``(b1 - b2)^2 / (se1^2 + se2^2)``."""
    denom = se1**2 + se2**2
    if not denom > 0:
        raise ZeroVariance("both standard errors are zero")
    return (b1 - b2) ** 2 / denom


def overlap_theoretical(alpha: float, se1: float, se2: float) -> float:
    """Overlap probability of two independent normal-theory level-alpha intervals."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    if se1 < 0 or se2 < 0 or se1 + se2 == 0:
        raise ValidationError("standard errors must be nonnegative and not both zero")
    ratio = math.sqrt((se1 + se2) ** 2 / (se1**2 + se2**2))
    return float(1.0 - 2.0 * stats.norm.cdf(stats.norm.ppf(alpha / 2.0) * ratio))


def intervals_overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """Closed-interval overlap; touching endpoints count."""
    return max(a[0], b[0]) <= min(a[1], b[1])


@dataclass(frozen=True)
class MethodFit:
    """Estimate, standard error and intervals keyed by alpha for one fold."""

    beta: float
    se: float
    intervals: dict[float, tuple[float, float]]
    normal_theory: bool = True


Method = Callable[[PanelData, np.ndarray, Sequence[float], int], MethodFit]


def _normal_intervals(beta: float, se: float, alphas) -> dict:
    return {a: (beta - stats.norm.ppf(1 - a / 2) * se, beta + stats.norm.ppf(1 - a / 2) * se) for a in alphas}


def ols_homoskedastic(panel: PanelData, z: np.ndarray, alphas: Sequence[float], seed: int) -> MethodFit:
    res = ols_panel(panel.Y, z, panel.X, panel.clustering)
    return MethodFit(res.beta, res.se_homoskedastic, _normal_intervals(res.beta, res.se_homoskedastic, alphas))


def ols_cluster(panel: PanelData, z: np.ndarray, alphas: Sequence[float], seed: int) -> MethodFit:
    res = ols_panel(panel.Y, z, panel.X, panel.clustering)
    return MethodFit(res.beta, res.se_cluster_robust, _normal_intervals(res.beta, res.se_cluster_robust, alphas))


def mosaic_method(kind: str = "local-exchangeability", R: int = 999) -> Method:
    """Mosaic intervals under the named invariance; ``se`` is the replicate SD."""

    def fit(panel: PanelData, z: np.ndarray, alphas: Sequence[float], seed: int) -> MethodFit:
        P = make_invariance(kind, panel.T)
        ci = mosaic_ci(panel.Y, z, panel.X, panel.clustering, P, alpha=alphas[0], R=R, seed=seed)
        return MethodFit(ci.beta_hat, ci.se, {a: ci.interval(a) for a in alphas}, normal_theory=False)

    fit.__name__ = f"mosaic-{kind}"
    return fit


def builtin_methods(R: int = 999) -> dict[str, Method]:
    return {
        "ols-homoskedastic": ols_homoskedastic,
        "ols-cluster": ols_cluster,
        "mosaic-symmetry": mosaic_method("symmetry", R),
        "mosaic-time-reversal": mosaic_method("time-reversal", R),
        "mosaic-local-exchangeability": mosaic_method("local-exchangeability", R),
    }


def default_coordinates(panel: PanelData, z: np.ndarray) -> np.ndarray:
    """Cluster means of the covariates, standardized across clusters."""
    covs = np.concatenate([np.asarray(z, dtype=float)[None], panel.X], axis=0)
    unit_means = covs.mean(axis=2)  # (D+1, N)
    ind = panel.clustering.assignment
    sums = np.stack([np.bincount(ind, weights=u, minlength=panel.M) for u in unit_means], axis=1)
    means = sums / panel.clustering.sizes[:, None]
    sd = means.std(axis=0)
    keep = sd > 0
    if not np.any(keep):
        return np.zeros((panel.M, 1))
    return (means[:, keep] - means[:, keep].mean(axis=0)) / sd[keep]


@dataclass
class DiagnosticsReport:
    """One row per split x method x alpha, plus per-(feature, method, alpha) aggregates."""

    rows: pd.DataFrame
    config: dict = field(default_factory=dict)

    @property
    def summary(self) -> pd.DataFrame:
        ok = self.rows[self.rows["error"] == ""]
        grouped = ok.groupby(["feature", "method", "alpha"], sort=False)
        out = grouped.agg(
            mean_lambda=("lambda", "mean"),
            p_empirical=("overlap", "mean"),
            p_theoretical=("p_theoretical", "mean"),
            n_splits=("split", "nunique"),
            approximate=("approximate", "any"),
        ).reset_index()
        return out

    def to_json_dict(self) -> dict:
        return {"config": self.config, "summary": self.summary.to_dict(orient="records")}


_ROW_COLUMNS = [
    "feature", "split", "anchor", "method", "alpha",
    "beta1", "se1", "beta2", "se2", "lambda",
    "lower1", "upper1", "lower2", "upper2",
    "overlap", "p_theoretical", "approximate", "error",
]


def run_diagnostics(
    panel: PanelData,
    z: np.ndarray,
    methods: Mapping[str, Method] | Sequence[str] = ("ols-homoskedastic", "ols-cluster", "mosaic-local-exchangeability"),
    n_splits: int = 100,
    alphas: Sequence[float] = (0.05,),
    seed: int = 0,
    coords=None,
    feature: str = "z",
    R: int = 999,
) -> DiagnosticsReport:
    """Fit every method on both folds of ``n_splits`` seeded splits.

    Parameters
    ----------
    panel : PanelData
        Outcome, controls and clustering.
    z : array (N, T)
        Covariate of interest.
    methods : mapping name -> callable, or names of built-in methods
    n_splits : int
    alphas : sequence of float
    seed : int
    coords : optional
        Cluster coordinates for :func:`split_folds`; defaults to standardized
        cluster means of the covariates.
    feature : str
        Label written to every row.
    R : int
        Replicates for the built-in mosaic methods.

    Fit failures on a fold are recorded in the ``error`` column.
    """
    if isinstance(methods, Mapping):
        method_map = dict(methods)
    else:
        registry = builtin_methods(R)
        unknown = [m for m in methods if m not in registry]
        if unknown:
            raise ValidationError(f"unknown methods {unknown}; choose from {sorted(registry)}")
        method_map = {m: registry[m] for m in methods}
    alphas = tuple(float(a) for a in alphas)
    z = np.asarray(z, dtype=float)
    coords = default_coordinates(panel, z) if coords is None else coords
    split_seeds = child_seeds(seed, n_splits)

    records = []
    for s, sseed in enumerate(split_seeds):
        fold_seeds = child_seeds(int(sseed), 3)
        split = split_folds(panel.clustering, coords, int(fold_seeds[0]))
        for name, method in method_map.items():
            fits, err = [], ""
            try:
                for fold, fseed in ((split.fold1, fold_seeds[1]), (split.fold2, fold_seeds[2])):
                    sub, rows = panel.subset_clusters(fold)
                    fits.append(method(sub, z[rows], alphas, int(fseed)))
                lam = lambda_ratio(fits[0].beta, fits[0].se, fits[1].beta, fits[1].se)
            except (MosaicError, np.linalg.LinAlgError) as exc:
                err = f"{type(exc).__name__}: {exc}"
            for a in alphas:
                row = dict.fromkeys(_ROW_COLUMNS, np.nan)
                row.update(feature=feature, split=s, anchor=split.anchor, method=name, alpha=a, error=err)
                if not err:
                    f1, f2 = fits
                    ptheory = np.nan
                    if f1.se + f2.se > 0:
                        ptheory = overlap_theoretical(a, f1.se, f2.se)
                    row.update(
                        beta1=f1.beta, se1=f1.se, beta2=f2.beta, se2=f2.se, **{"lambda": lam},
                        lower1=f1.intervals[a][0], upper1=f1.intervals[a][1],
                        lower2=f2.intervals[a][0], upper2=f2.intervals[a][1],
                        overlap=intervals_overlap(f1.intervals[a], f2.intervals[a]),
                        p_theoretical=ptheory,
                        approximate=not (f1.normal_theory and f2.normal_theory),
                    )
                else:
                    row.update(overlap=False, approximate=False)
                records.append(row)

    rows = pd.DataFrame.from_records(records, columns=_ROW_COLUMNS)
    rows["overlap"] = rows["overlap"].astype(bool)
    rows["approximate"] = rows["approximate"].astype(bool)
    config = {
        "n_splits": n_splits, "alphas": list(alphas), "seed": int(seed),
        "methods": list(method_map), "feature": feature, "R": R,
    }
    return DiagnosticsReport(rows, config)
