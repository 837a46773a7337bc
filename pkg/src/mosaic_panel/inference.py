"""Mosaic point estimates and confidence intervals, plus pooled-OLS comparators."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .engine import mosaic_randomize, mosaic_resid_arrays
from .exceptions import InvalidAlpha, InvalidPanel, NoLocalVariation, RankDeficient
from .invariance import Invariance
from .panel import Clustering, _as_design
from .rng import normalize_seed, sign_bits

_RHO_DEGENERATE_TOL = 1e-12
_NO_VARIATION_TOL = 1e-10


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True, eq=False)
class CiInputs:
    """Validated inputs for :func:`mosaic_ci`."""

    Y: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    clustering: Clustering
    invariance: Invariance
    alpha: float = 0.05
    R: int = 999
    seed: int | None = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        if Y.ndim != 2 or Z.shape != Y.shape:
            raise InvalidPanel(f"Y and Z must share a 2-d shape, got {Y.shape} and {Z.shape}")
        N, T = Y.shape
        if self.clustering.N != N:
            raise InvalidPanel(f"clustering covers {self.clustering.N} units, Y has {N}")
        if self.invariance.T != T:
            raise InvalidPanel(f"invariance has T={self.invariance.T}, panel has T={T}")
        _check_alpha(self.alpha)
        if self.R < 2:
            raise ValueError(f"need R >= 2 replicates, got {self.R}")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "X", _as_design(self.X, N, T))
        object.__setattr__(self, "seed", normalize_seed(self.seed))


class MosaicEstimate(NamedTuple):
    beta_hat: float
    D: np.ndarray
    eps_hat: np.ndarray


def _local_contrast(A: np.ndarray, P: Invariance) -> np.ndarray:
    return 0.5 * (A - P.apply(A))


def _estimate(Y, Z, X, clustering, P) -> tuple[MosaicEstimate, np.ndarray]:
    (eps, A), _ = mosaic_resid_arrays([Y, Z], X, clustering, P)
    D = _local_contrast(A, P)
    dd = float(np.sum(D * D))
    scale = max(float(np.sum(np.asarray(Z, dtype=float) ** 2)), np.finfo(float).tiny)
    if dd <= (_NO_VARIATION_TOL**2) * scale:
        raise NoLocalVariation(
            "the covariate of interest has no variation left after residualizing on the "
            "controls and contrasting with its transform under the invariance"
        )
    return MosaicEstimate(float(np.sum(D * eps)) / dd, D, eps), A


def mosaic_beta(
    Y: np.ndarray, Z: np.ndarray, X: np.ndarray, clustering: Clustering, P: Invariance
) -> MosaicEstimate:
    """Mosaic estimate ``<D, eps_hat> / <D, D>`` of the coefficient on ``Z``.

    ``eps_hat`` are the mosaic residuals of ``Y`` and ``D = (A - A P) / 2`` where
    ``A`` are the mosaic residuals of ``Z``, both on the controls ``X``.

    Raises
    ------
    NoLocalVariation
        If ``<D, D>`` is numerically zero.
    """
    Y = np.asarray(Y, dtype=float)
    return _estimate(Y, Z, _as_design(X, *Y.shape), clustering, P)[0]


def covariate_residuals(
    Z: np.ndarray, X: np.ndarray, clustering: Clustering, P: Invariance
) -> np.ndarray:
    """Mosaic residuals ``A`` of the covariate of interest."""
    Z = np.asarray(Z, dtype=float)
    (A,), _ = mosaic_resid_arrays([Z], _as_design(X, *Z.shape), clustering, P)
    return A


@dataclass(frozen=True, eq=False)
class CiResult:
    """Mosaic confidence interval and the replicate draws behind it."""

    beta_hat: float
    lower: float
    upper: float
    se: float
    alpha: float
    replicate_values: np.ndarray = field(repr=False)
    rho_values: np.ndarray = field(repr=False)
    degenerate: np.ndarray = field(repr=False)
    seed: int = 0

    @property
    def R(self) -> int:
        return self.replicate_values.size

    @property
    def degenerate_count(self) -> int:
        return int(np.count_nonzero(self.degenerate))

    def interval(self, alpha: float) -> tuple[float, float]:
        """Endpoints at another level from the same replicates."""
        return ci_endpoints(self.beta_hat, self.replicate_values, self.degenerate, alpha)

    def to_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat,
            "lower": self.lower,
            "upper": self.upper,
            "se": self.se,
            "alpha": self.alpha,
            "R": self.R,
            "seed": self.seed,
            "degenerate_count": self.degenerate_count,
        }


def quantile_indices(R: int, alpha: float) -> tuple[int, int]:
    """1-based order statistics used for the lower and upper endpoints.

    ``floor((R+1) alpha/2)`` and ``ceil((R+1)(1 - alpha/2))``, clamped to ``[1, R]``;
    these are the exact acceptance boundaries of the two one-sided
    ``(1 + count) / (R + 1)`` p-values at level ``alpha / 2``.
    """
    c = (R + 1) * alpha / 2.0
    lo = math.floor(c + 1e-9)
    hi = R + 1 - lo
    if lo < 1:
        warnings.warn(
            f"R={R} is too small for alpha={alpha}; the interval is clamped to the "
            f"extreme replicates (use R >= {math.ceil(2 / alpha)})",
            stacklevel=3,
        )
    return max(lo, 1), min(hi, R)


def ci_endpoints(
    beta_hat: float, values: np.ndarray, degenerate: np.ndarray, alpha: float
) -> tuple[float, float]:
    """Interval endpoints from replicate values.

    A degenerate replicate (``rho = 1``) ties the observed statistic for every
    candidate coefficient, so it counts toward acceptance on both sides: it
    sorts below every value for the lower endpoint and above every value for
    the upper endpoint.
    """
    _check_alpha(alpha)
    values = np.asarray(values, dtype=float)
    R = values.size
    lo, hi = quantile_indices(R, alpha)
    low_vals = np.sort(np.where(degenerate, -np.inf, values))
    high_vals = np.sort(np.where(degenerate, np.inf, values))
    return beta_hat + low_vals[lo - 1], beta_hat + high_vals[hi - 1]


def mosaic_se(replicate_values: np.ndarray) -> float:
    """Standard deviation (denominator ``R - 1``) of the replicate values."""
    v = np.asarray(replicate_values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least 2 replicate values")
    return float(np.std(v, ddof=1))


def _replicates(D: np.ndarray, eps: np.ndarray, clustering: Clustering, beta_hat: float, B: np.ndarray):
    """Per-replicate ``rho``, ``beta_tilde`` from cluster-level sums.

    Since ``D P = -D`` blockwise, transforming cluster ``m`` only flips the sign
    of ``|D_m|^2`` and ``<D_m, eps_m>``.
    """
    ind = clustering.assignment
    d = np.bincount(ind, weights=np.sum(D * D, axis=1), minlength=clustering.M)
    u = np.bincount(ind, weights=np.sum(D * eps, axis=1), minlength=clustering.M)
    total = d.sum()
    signs = 1.0 - 2.0 * B
    rho = (signs @ d) / total
    beta_tilde = (signs @ u) / total
    active = d > 0
    degenerate = ~np.any(B[:, active], axis=1) | (np.abs(1.0 - rho) < _RHO_DEGENERATE_TOL)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (rho * beta_hat - beta_tilde) / (1.0 - rho)
    values = np.where(degenerate, 0.0, values)
    return rho, beta_tilde, values, degenerate


def mosaic_ci(
    Y: np.ndarray,
    Z: np.ndarray,
    X: np.ndarray | None,
    clustering: Clustering,
    P: Invariance,
    alpha: float = 0.05,
    R: int = 999,
    seed: int | None = None,
) -> CiResult:
    """Mosaic confidence interval for the coefficient on ``Z``.

    Each replicate draws one sign pattern and applies it to both ``D`` and the
    residuals. The replicate value is ``(rho*beta_hat - beta_tilde)/(1 - rho)``
    and the interval is ``beta_hat`` plus order statistics of those values
    (see :func:`quantile_indices`).

    Parameters
    ----------
    Y, Z : array (N, T)
        Outcome and covariate of interest.
    X : array (D, N, T) or None
        Controls.
    clustering : Clustering
    P : Invariance
    alpha : float
        One minus the nominal coverage.
    R : int
        Number of replicates; at least ``ceil(2 / alpha)`` is recommended.
    seed : int, optional

    Raises
    ------
    NoLocalVariation, InvalidAlpha
    """
    inp = CiInputs(Y, Z, X, clustering, P, alpha, R, seed)
    est, _ = _estimate(inp.Y, inp.Z, inp.X, clustering, P)
    B = sign_bits(inp.seed, R, clustering.M)
    rho, _, values, degenerate = _replicates(est.D, est.eps_hat, clustering, est.beta_hat, B)
    lower, upper = ci_endpoints(est.beta_hat, values, degenerate, alpha)
    for arr in (values, rho, degenerate):
        arr.setflags(write=False)
    return CiResult(
        beta_hat=est.beta_hat,
        lower=float(lower),
        upper=float(upper),
        se=mosaic_se(values),
        alpha=alpha,
        replicate_values=values,
        rho_values=rho,
        degenerate=degenerate,
        seed=inp.seed,
    )


def replicate_terms_direct(
    D: np.ndarray, eps: np.ndarray, clustering: Clustering, P: Invariance, B: np.ndarray
) -> tuple[float, float]:
    """``(rho, beta_tilde)`` for one sign pattern by explicit randomization.

    Slow reference path for checking the cluster-sum shortcut.
    """
    Dt = mosaic_randomize(D, P, B, clustering)
    Et = mosaic_randomize(eps, P, B, clustering)
    dd = float(np.sum(D * D))
    rho = float(np.sum(D * Dt)) / math.sqrt(dd * float(np.sum(Dt * Dt)))
    return rho, float(np.sum(D * Et)) / dd


def inversion_accepts(
    Y: np.ndarray,
    Z: np.ndarray,
    X: np.ndarray | None,
    clustering: Clustering,
    P: Invariance,
    b: float,
    alpha: float,
    R: int,
    seed: int,
) -> bool:
    """Whether ``b`` survives the two-sided mosaic test of ``beta = b``.

    Refits the mosaic residuals of ``Y - b Z`` and randomizes them with the
    sign stream of ``seed``; the statistic is ``<D, eps> / <D, D>``. ``b`` is
    accepted when both one-sided p-values exceed ``alpha / 2``.
    """
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    X = _as_design(X, *Y.shape)
    (eps_b, A), _ = mosaic_resid_arrays([Y - b * Z, Z], X, clustering, P)
    D = _local_contrast(A, P)
    dd = float(np.sum(D * D))
    observed = float(np.sum(D * eps_b)) / dd
    B = sign_bits(normalize_seed(seed), R, clustering.M)
    randomized = np.array(
        [float(np.sum(D * mosaic_randomize(eps_b, P, B[r], clustering))) / dd for r in range(R)]
    )
    p_upper = (1 + np.count_nonzero(observed <= randomized)) / (R + 1)
    p_lower = (1 + np.count_nonzero(observed >= randomized)) / (R + 1)
    return bool(p_upper > alpha / 2 and p_lower > alpha / 2)


class OlsResult(NamedTuple):
    beta: float
    se_homoskedastic: float
    se_cluster_robust: float


def ols_panel(
    Y: np.ndarray, Z: np.ndarray, X: np.ndarray | None, clustering: Clustering
) -> OlsResult:
    """Pooled OLS of ``Y`` on ``[Z, X]`` over all ``N*T`` cells.

    Returns the coefficient on ``Z`` with its homoskedastic standard error
    and its CRV1 cluster-robust standard error (clusters of units, factor
    ``M/(M-1) * (n-1)/(n-k)``). Collinear controls are dropped by pivoted QR.

    Raises
    ------
    RankDeficient
        If ``Z`` is collinear with the controls or no residual degrees of freedom remain.
    """
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    N, T = Y.shape
    X = _as_design(X, N, T)
    n = N * T
    y = Y.ravel()
    z = Z.ravel()
    ctrl = X.reshape(X.shape[0], n).T

    if ctrl.shape[1] and np.any(ctrl):
        _, Rc, piv = scipy.linalg.qr(ctrl, mode="economic", pivoting=True)
        pivots = np.abs(np.diag(Rc))
        keep = np.sort(piv[: np.count_nonzero(pivots > 1e-8 * math.sqrt(n) * pivots[0])])
        ctrl = ctrl[:, keep]
    else:
        ctrl = ctrl[:, :0]

    W = np.column_stack([z, ctrl])
    k = W.shape[1]
    Q, Rw = np.linalg.qr(W)
    if abs(Rw[0, 0]) == 0 or abs(Rw[-1, -1]) <= 1e-8 * math.sqrt(n) * np.max(np.abs(np.diag(Rw))):
        raise RankDeficient("the covariate of interest is collinear with the controls")
    if n <= k:
        raise RankDeficient(f"{n} observations leave no residual degrees of freedom for {k} columns")
    coef = scipy.linalg.solve_triangular(Rw, Q.T @ y)
    e = y - W @ coef
    Rinv = scipy.linalg.solve_triangular(Rw, np.eye(k))
    bread = Rinv @ Rinv.T

    sigma2 = float(e @ e) / (n - k)
    se_h = math.sqrt(sigma2 * bread[0, 0])

    g = np.repeat(clustering.assignment, T)
    scores = np.zeros((clustering.M, k))
    np.add.at(scores, g, W * e[:, None])
    meat = scores.T @ scores
    M = clustering.M
    factor = M / (M - 1) * (n - 1) / (n - k)
    V = factor * bread @ meat @ bread
    return OlsResult(float(coef[0]), se_h, math.sqrt(max(V[0, 0], 0.0)))
