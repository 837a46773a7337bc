"""Balanced panels, cluster partitions and the within-cluster least-squares fit."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import DegenerateCluster, InvalidPanel
from .invariance import Invariance

RANK_TOL_FACTOR = 1e-8
EXACT_FIT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Clustering:
    """Partition of ``N`` units into ``M >= 2`` nonempty clusters.

    ``assignment[i]`` is the cluster index (``0..M-1``) of unit ``i``.
    """

    assignment: np.ndarray
    M: int
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or a.size == 0:
            raise InvalidPanel("cluster assignment must be a nonempty 1-d array")
        if not np.issubdtype(a.dtype, np.integer):
            raise InvalidPanel("cluster assignment must be integer-valued")
        if self.M < 2:
            raise InvalidPanel(
                f"need at least 2 clusters, got M={self.M}; with one cluster the "
                "randomization is vacuous"
            )
        if a.min() < 0 or a.max() >= self.M:
            raise InvalidPanel(f"cluster indices must lie in [0, {self.M})")
        counts = np.bincount(a, minlength=self.M)
        if np.any(counts == 0):
            raise InvalidPanel(f"clusters {np.flatnonzero(counts == 0).tolist()} are empty")
        a = a.astype(np.intp, copy=True)
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(self.M)))

    @classmethod
    def from_labels(cls, labels: Sequence) -> Clustering:
        """Build from arbitrary per-unit labels; clusters are ordered by sorted label."""
        uniq, inv = np.unique(np.asarray(labels), return_inverse=True)
        return cls(inv.astype(np.intp), len(uniq), tuple(uniq.tolist()))

    @classmethod
    def singletons(cls, N: int) -> Clustering:
        return cls(np.arange(N), N)

    @property
    def N(self) -> int:
        return self.assignment.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.M)

    def members(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == m)

    def groups(self) -> list[np.ndarray]:
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(order, bounds)


@dataclass(frozen=True, eq=False)
class PanelData:
    """Balanced ``N x T`` panel with ``D`` covariate matrices.

    Parameters
    ----------
    Y : array (N, T)
        Outcomes.
    X : array (D, N, T) or sequence of D arrays (N, T)
        Covariates; fixed-effect dummies are ordinary entries here.
    clustering : Clustering
    unit_ids, time_ids : sequences, optional
        Labels; ``time_ids`` must be strictly increasing.
    """

    Y: np.ndarray
    X: np.ndarray
    clustering: Clustering
    unit_ids: tuple = ()
    time_ids: tuple = ()

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        if Y.ndim != 2:
            raise InvalidPanel(f"Y must be 2-d (N, T), got shape {Y.shape}")
        N, T = Y.shape
        X = _as_design(self.X, N, T)
        if T < 2:
            raise InvalidPanel(f"need T >= 2 time periods, got {T}")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
            raise InvalidPanel("panel contains missing or non-finite values")
        if self.clustering.N != N:
            raise InvalidPanel(f"clustering covers {self.clustering.N} units, panel has {N}")
        unit_ids = tuple(self.unit_ids) or tuple(range(N))
        time_ids = tuple(self.time_ids) or tuple(range(T))
        if len(unit_ids) != N or len(time_ids) != T:
            raise InvalidPanel("unit_ids / time_ids lengths do not match Y")
        if any(not (a < b) for a, b in zip(time_ids[:-1], time_ids[1:])):
            raise InvalidPanel("time_ids must be strictly increasing")
        Y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "unit_ids", unit_ids)
        object.__setattr__(self, "time_ids", time_ids)

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    @property
    def D(self) -> int:
        return self.X.shape[0]

    @property
    def M(self) -> int:
        return self.clustering.M

    def with_outcome(self, Y: np.ndarray) -> PanelData:
        return PanelData(Y, self.X, self.clustering, self.unit_ids, self.time_ids)

    def subset_clusters(self, clusters: Sequence[int]) -> tuple[PanelData, np.ndarray]:
        """Restrict to the given clusters; returns the sub-panel and the kept unit rows."""
        clusters = np.sort(np.asarray(clusters, dtype=np.intp))
        rows = np.flatnonzero(np.isin(self.clustering.assignment, clusters))
        remap = np.full(self.M, -1, dtype=np.intp)
        remap[clusters] = np.arange(clusters.size)
        sub_clust = Clustering(
            remap[self.clustering.assignment[rows]],
            clusters.size,
            tuple(self.clustering.labels[c] for c in clusters),
        )
        sub = PanelData(
            self.Y[rows],
            self.X[:, rows],
            sub_clust,
            tuple(self.unit_ids[i] for i in rows),
            self.time_ids,
        )
        return sub, rows


def _as_design(X, N: int, T: int) -> np.ndarray:
    if X is None:
        return np.zeros((0, N, T))
    if isinstance(X, np.ndarray):
        arr = np.array(X, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
    else:
        mats = [np.asarray(x, dtype=float) for x in X]
        arr = np.stack(mats) if mats else np.zeros((0, N, T))
    if arr.ndim != 3 or arr.shape[1:] != (N, T):
        raise InvalidPanel(f"covariates must have shape (D, {N}, {T}), got {arr.shape}")
    return arr


def augment_design(X: np.ndarray | Sequence[np.ndarray], P: Invariance) -> np.ndarray:
    """Stack the covariates with their transformed copies ``X[d] @ P``.

    Returns an array of shape ``(2D, N, T)``: the ``D`` originals followed by
    the ``D`` transformed matrices, in the same order.
    """
    if isinstance(X, np.ndarray):
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[None]
    else:
        X = np.stack([np.asarray(x, dtype=float) for x in X]) if len(X) else None
    if X is None:
        return np.zeros((0, 0, P.T))
    if X.ndim != 3:
        raise ValueError(f"expected covariates of shape (D, N, T), got {X.shape}")
    if X.shape[-1] != P.T:
        raise ValueError(f"covariates have T={X.shape[-1]}, invariance has T={P.T}")
    return np.concatenate([X, P.apply(X)], axis=0)


@dataclass(frozen=True, eq=False)
class ClusterFit:
    """Result of the least-squares fit restricted to one cluster.

    ``kept_columns`` index the augmented design (originals first, then
    transformed); ``empty_design`` flags a cluster whose design carries no
    variation at all, in which case the residuals are the raw outcomes.
    """

    cluster: int
    kept_columns: np.ndarray
    rank: int
    residuals: np.ndarray
    empty_design: bool = False


def _pivoted_rank(W: np.ndarray, rank_tol: float | None) -> tuple[int, np.ndarray]:
    _, R, piv = scipy.linalg.qr(W, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(R))
    tol = (RANK_TOL_FACTOR * np.sqrt(W.shape[0]) if rank_tol is None else rank_tol) * pivots[0]
    return int(np.count_nonzero(pivots > tol)), piv


class _ResidualMaker:
    """Orthogonal projector onto the complement of one cluster's kept design columns."""

    __slots__ = ("cluster", "kept", "rank", "n_obs", "_Q", "_shape")

    def __init__(self, design: np.ndarray, cluster: int, rank_tol: float | None = None):
        # design: (p, k, T); observations are vectorized unit-major, time-minor.
        p, k, T = design.shape
        n = k * T
        self.cluster = cluster
        self.n_obs = n
        self._shape = (k, T)
        W = design.reshape(p, n).T
        if p == 0 or not np.any(W):
            self.kept = np.zeros(0, dtype=np.intp)
            self.rank = 0
            self._Q = None
            return
        rank, piv = _pivoted_rank(W, rank_tol)
        self.kept = np.sort(piv[:rank]).astype(np.intp)
        self.rank = rank
        if n <= rank:
            raise DegenerateCluster(cluster, n, rank)
        # Unpivoted refit on the kept columns: refitting with exactly these
        # columns reproduces the residuals bit for bit.
        self._Q = np.linalg.qr(W[:, self.kept], mode="reduced")[0]

    def residualize(self, blocks: np.ndarray) -> np.ndarray:
        """Residuals for one or many outcome blocks of shape ``(..., k, T)``."""
        blocks = np.asarray(blocks, dtype=float)
        if self._Q is None:
            return blocks.copy()
        lead = blocks.shape[:-2]
        Yv = blocks.reshape(-1, self.n_obs).T
        res = Yv - self._Q @ (self._Q.T @ Yv)
        # An exact fit leaves only rounding noise; report it as exactly zero.
        exact = np.linalg.norm(res, axis=0) <= EXACT_FIT_TOL * np.linalg.norm(Yv, axis=0)
        res[:, exact] = 0.0
        return res.T.reshape(*lead, *self._shape)


def residual_df(
    X: np.ndarray, clustering: Clustering, P: Invariance, rank_tol: float | None = None
) -> np.ndarray:
    """Per-cluster residual degrees of freedom ``|C_m| T - rank``; never raises."""
    aug = augment_design(X, P)
    if aug.shape[0] == 0:
        return clustering.sizes * P.T
    out = np.empty(clustering.M, dtype=np.intp)
    for m, rows in enumerate(clustering.groups()):
        W = aug[:, rows].reshape(aug.shape[0], -1).T
        n = rows.size * P.T
        out[m] = n if W.shape[1] == 0 or not np.any(W) else n - _pivoted_rank(W, rank_tol)[0]
    return out


def residual_makers(
    X: np.ndarray, clustering: Clustering, P: Invariance, rank_tol: float | None = None
) -> list[_ResidualMaker]:
    """Factor every cluster's augmented design once, for reuse across outcomes."""
    aug = augment_design(X, P)
    return [
        _ResidualMaker(aug[:, rows], m, rank_tol)
        for m, rows in enumerate(clustering.groups())
    ]


def cluster_fit(
    panel: PanelData,
    augmented: np.ndarray,
    m: int,
    rank_tol: float | None = None,
) -> ClusterFit:
    """Least-squares residuals of ``Y`` restricted to cluster ``m``.

    Parameters
    ----------
    panel : PanelData
    augmented : array (p, N, T)
        Design columns, typically the output of :func:`augment_design`.
    m : int
        Cluster index.
    rank_tol : float, optional
        Relative pivot threshold; columns whose pivoted-QR diagonal falls at or
        below ``rank_tol * max pivot`` are dropped. Defaults to
        ``1e-8 * sqrt(|C_m| * T)``.

    Raises
    ------
    DegenerateCluster
        If the cluster has no residual degrees of freedom.
    """
    rows = panel.clustering.members(m)
    if rows.size == 0:
        raise InvalidPanel(f"cluster {m} is empty")
    augmented = np.asarray(augmented, dtype=float).reshape(-1, panel.N, panel.T)
    maker = _ResidualMaker(augmented[:, rows], m, rank_tol)
    return ClusterFit(
        cluster=m,
        kept_columns=maker.kept,
        rank=maker.rank,
        residuals=maker.residualize(panel.Y[rows]),
        empty_design=maker.rank == 0,
    )
