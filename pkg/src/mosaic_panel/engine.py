"""Mosaic residuals, per-cluster randomization and the mosaic permutation test."""

from __future__ import annotations

import itertools
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidPanel, InvalidReplicates
from .invariance import Invariance
from .panel import Clustering, ClusterFit, PanelData, residual_makers
from .rng import normalize_seed, sign_bits

Statistic = Callable[[np.ndarray], float]
_CHUNK = 1 << 21


@dataclass(frozen=True, eq=False)
class MosaicResiduals:
    """Concatenated per-cluster residuals ``(N, T)`` plus each cluster's fit metadata."""

    residuals: np.ndarray
    fits: list[ClusterFit]
    clustering: Clustering

    @property
    def N(self) -> int:
        return self.residuals.shape[0]

    @property
    def T(self) -> int:
        return self.residuals.shape[1]


def mosaic_resid_arrays(
    outcomes: list[np.ndarray],
    X: np.ndarray,
    clustering: Clustering,
    P: Invariance,
    rank_tol: float | None = None,
) -> tuple[list[np.ndarray], list]:
    """Mosaic residuals of several ``(N, T)`` outcomes sharing one design.

    Each cluster's augmented design is factored once.
    """
    makers = residual_makers(X, clustering, P, rank_tol)
    stacked = np.stack([np.asarray(y, dtype=float) for y in outcomes])
    out = np.empty_like(stacked)
    for maker, rows in zip(makers, clustering.groups()):
        out[:, rows] = maker.residualize(stacked[:, rows])
    return list(out), makers


def mosaic_resid(panel: PanelData, P: Invariance, rank_tol: float | None = None) -> MosaicResiduals:
    """Residuals from cluster-by-cluster fits on the invariance-augmented design.

    Raises
    ------
    DegenerateCluster
        If some cluster leaves no residual degrees of freedom.
    """
    if P.T != panel.T:
        raise InvalidPanel(f"invariance has T={P.T}, panel has T={panel.T}")
    (resid,), makers = mosaic_resid_arrays([panel.Y], panel.X, panel.clustering, P, rank_tol)
    resid.setflags(write=False)
    fits = [
        ClusterFit(
            cluster=mk.cluster,
            kept_columns=mk.kept,
            rank=mk.rank,
            residuals=resid[rows],
            empty_design=mk.rank == 0,
        )
        for mk, rows in zip(makers, panel.clustering.groups())
    ]
    return MosaicResiduals(resid, fits, panel.clustering)


@dataclass(frozen=True, eq=False)
class SignAssignment:
    """Per-cluster transform indicators ``B_m``; ``Z_m = 2 B_m - 1``."""

    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "B", np.asarray(self.B, dtype=bool).ravel())

    @property
    def Z(self) -> np.ndarray:
        return 2 * self.B.astype(np.int8) - 1

    @property
    def M(self) -> int:
        return self.B.size

    @classmethod
    def draw(cls, seed: int, r: int, M: int) -> SignAssignment:
        """Signs for replicate ``r`` of the stream rooted at ``seed``."""
        return cls(sign_bits(seed, 1, M, start=r)[0])


def mosaic_randomize(
    resid: MosaicResiduals | np.ndarray,
    P: Invariance,
    signs: SignAssignment | np.ndarray,
    clustering: Clustering | None = None,
) -> np.ndarray:
    """Apply ``P`` to the block of every cluster with ``B_m = 1``; leave the rest.

    ``resid`` may be a raw ``(N, T)`` array, in which case ``clustering`` is required.
    """
    if isinstance(resid, MosaicResiduals):
        clustering = clustering or resid.clustering
        E = resid.residuals
    else:
        E = np.asarray(resid, dtype=float)
        if clustering is None:
            raise ValueError("clustering is required when randomizing a raw array")
    B = signs.B if isinstance(signs, SignAssignment) else np.asarray(signs, dtype=bool)
    if B.size != clustering.M:
        raise ValueError(f"got {B.size} signs for {clustering.M} clusters")
    flip = B[clustering.assignment]
    return np.where(flip[:, None], P.apply(E), E)


@dataclass(frozen=True, eq=False)
class StatWeights:
    """Symmetric ``N x N`` weights, zero within clusters, unit norm per cluster pair."""

    s: np.ndarray
    clustering: Clustering

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        c = self.clustering
        if s.shape != (c.N, c.N):
            raise ValueError(f"weights must be ({c.N}, {c.N}), got {s.shape}")
        if not np.allclose(s, s.T, rtol=0, atol=1e-12):
            raise ValueError("weights must be symmetric")
        same = c.assignment[:, None] == c.assignment[None, :]
        if np.any(s[same] != 0):
            raise ValueError("weights must vanish within clusters")
        ind = _indicator(c)
        norms = ind.T @ (s**2) @ ind
        off = ~np.eye(c.M, dtype=bool)
        if not np.allclose(norms[off], 1.0, rtol=1e-10, atol=0):
            raise ValueError("each cluster pair's squared weights must sum to 1")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)


def _indicator(clustering: Clustering) -> np.ndarray:
    ind = np.zeros((clustering.N, clustering.M))
    ind[np.arange(clustering.N), clustering.assignment] = 1.0
    return ind


def default_weights(clustering: Clustering) -> StatWeights:
    """``s_ij = 1 / sqrt(|C_m| |C_m'|)`` for units in distinct clusters ``m != m'``."""
    sizes = clustering.sizes[clustering.assignment].astype(float)
    s = 1.0 / np.sqrt(np.outer(sizes, sizes))
    s[clustering.assignment[:, None] == clustering.assignment[None, :]] = 0.0
    return StatWeights(s, clustering)


def quadratic_stat(resid: np.ndarray, weights: StatWeights) -> float:
    """Weighted sum of inter-cluster residual inner products (ordered pairs)."""
    E = np.asarray(resid, dtype=float)
    return float(np.sum(weights.s * (E @ E.T)))


def _pair_sums(E: np.ndarray, EP: np.ndarray, weights: StatWeights) -> tuple[np.ndarray, np.ndarray]:
    ind = _indicator(weights.clustering)
    a = ind.T @ (weights.s * (E @ E.T)) @ ind
    b = ind.T @ (weights.s * (E @ EP.T)) @ ind
    return a, b


def delta_matrix(resid: np.ndarray, weights: StatWeights, P: Invariance) -> np.ndarray:
    """Symmetric ``M x M`` array of ``delta_{m,m'}`` with a zero diagonal."""
    E = np.asarray(resid, dtype=float)
    a, b = _pair_sums(E, P.apply(E), weights)
    delta = a - b
    np.fill_diagonal(delta, 0.0)
    return 0.5 * (delta + delta.T)


def delta_pair(resid: np.ndarray, weights: StatWeights, P: Invariance, m: int, m2: int) -> float:
    """``sum_{i in C_m, j in C_m2} s_ij e_i' (I - P) e_j``."""
    if m == m2:
        raise ValueError("delta is defined for distinct clusters only")
    E = np.asarray(resid, dtype=float)
    c = weights.clustering
    i, j = c.members(m), c.members(m2)
    diff = E[j] - P.apply(E[j])
    return float(np.sum(weights.s[np.ix_(i, j)] * (E[i] @ diff.T)))


class _QuadraticRandomization:
    """The quadratic statistic under sign flips, as an affine function of ``Z_m Z_m'``.

    With ``a``/``b`` the pairwise sums before/after transforming one member of
    the pair, ``S(z) = c0 + sum_{m<m'} z_m z_m' delta_{m,m'}``.
    """

    def __init__(self, resid: np.ndarray, weights: StatWeights, P: Invariance):
        a, b = _pair_sums(resid, P.apply(resid), weights)
        iu = np.triu_indices(weights.clustering.M, k=1)
        self.iu = iu
        # a, b are symmetric up to rounding; sum both triangles.
        self.c0 = 0.5 * float(np.sum(a[iu] + a.T[iu] + b[iu] + b.T[iu]))
        self.delta = 0.5 * ((a - b)[iu] + (a - b).T[iu])

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        Z = Z * Z[:, :1]  # global flip leaves S unchanged
        # Row-wise reductions (not a matmul, whose rounding can depend on the
        # row's position) so that equal sign patterns give bit-equal values.
        out = np.empty(Z.shape[0])
        step = max(1, _CHUNK // max(1, self.delta.size))
        for start in range(0, Z.shape[0], step):
            blk = Z[start : start + step]
            zz = blk[:, self.iu[0]] * blk[:, self.iu[1]]
            out[start : start + step] = np.sum(zz * self.delta, axis=1)
        return self.c0 + out

    @property
    def mean(self) -> float:
        return self.c0


@dataclass(frozen=True, eq=False)
class TestResult:
    """Observed statistic, its ``R`` randomized counterparts and the p-value."""

    __test__ = False  # not a pytest class

    observed: float
    randomized: np.ndarray
    p_value: float
    seed: int
    R: int
    statistic: str = field(default="quadratic")

    def to_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "statistic": self.observed,
            "R": self.R,
            "seed": self.seed,
        }


def permutation_pvalue(observed: float, randomized: np.ndarray) -> float:
    """``(1 + #{r : observed <= randomized_r}) / (R + 1)``; ties count against rejection."""
    randomized = np.asarray(randomized)
    return (1.0 + np.count_nonzero(observed <= randomized)) / (randomized.size + 1.0)


def mosaic_test(
    panel: PanelData,
    P: Invariance,
    weights: StatWeights | None = None,
    statistic: Statistic | None = None,
    R: int = 999,
    seed: int | None = None,
    two_sided: bool = False,
) -> TestResult:
    """Mosaic permutation test of cluster independence.

    Parameters
    ----------
    panel : PanelData
    P : Invariance
    weights : StatWeights, optional
        Weights for the quadratic statistic; defaults to :func:`default_weights`.
    statistic : callable, optional
        Any function of an ``(N, T)`` residual matrix returning a float. When
        given, ``weights`` must be omitted and each replicate is evaluated directly.
    R : int
        Number of randomizations.
    seed : int, optional
        Root seed; replicate ``r`` uses an independent stream derived from it.
    two_sided : bool
        Use ``|S|`` so that negative dependence also counts as evidence.

    Raises
    ------
    InvalidReplicates
        If ``R < 1``.
    """
    if R < 1:
        raise InvalidReplicates(f"need R >= 1 randomizations, got {R}")
    if statistic is not None and weights is not None:
        raise ValueError("pass either weights or a custom statistic, not both")
    seed = normalize_seed(seed)
    mr = mosaic_resid(panel, P)
    B = sign_bits(seed, R, panel.M)

    if statistic is None:
        weights = weights or default_weights(panel.clustering)
        quad = _QuadraticRandomization(mr.residuals, weights, P)
        Z = np.vstack([np.ones((1, panel.M)), 2.0 * B - 1.0])
        values = quad(Z)
        if two_sided:
            values = np.abs(values)
        observed, randomized = float(values[0]), values[1:]
        name = "quadratic-abs" if two_sided else "quadratic"
    else:
        f = (lambda E: abs(statistic(E))) if two_sided else statistic
        observed = float(f(mr.residuals))
        randomized = np.array(
            [f(mosaic_randomize(mr, P, B[r])) for r in range(R)], dtype=float
        )
        name = getattr(statistic, "__name__", "custom")

    randomized.setflags(write=False)
    return TestResult(observed, randomized, permutation_pvalue(observed, randomized), seed, R, name)


def enumerate_signs(M: int) -> np.ndarray:
    """All ``2**M`` sign patterns as a boolean ``(2**M, M)`` array."""
    if M > 20:
        raise ValueError(f"refusing to enumerate 2**{M} sign patterns")
    return np.array(list(itertools.product([False, True], repeat=M)), dtype=bool)


def exact_pvalue(
    resid: MosaicResiduals,
    P: Invariance,
    weights: StatWeights | None = None,
    statistic: Statistic | None = None,
) -> float:
    """Fraction of all ``2**M`` sign patterns whose statistic is at least the observed one."""
    allB = enumerate_signs(resid.clustering.M)
    if statistic is None:
        weights = weights or default_weights(resid.clustering)
        quad = _QuadraticRandomization(resid.residuals, weights, P)
        values = quad(np.vstack([np.ones((1, allB.shape[1])), 2.0 * allB - 1.0]))
        observed, randomized = values[0], values[1:]
    else:
        observed = statistic(resid.residuals)
        randomized = np.array([statistic(mosaic_randomize(resid, P, b)) for b in allB])
    return float(np.mean(observed <= randomized))


def randomization_mean(resid: np.ndarray, weights: StatWeights, P: Invariance) -> float:
    """Mean of the quadratic statistic over the uniform law on sign patterns."""
    return _QuadraticRandomization(np.asarray(resid, dtype=float), weights, P).mean
