"""Synthetic panels and Monte Carlo drivers for calibration, coverage and diagnostics.

Families
--------
``robustness324``
    AR(1) errors with Laplace innovations whose scale grows like ``t**0.25``,
    plus a Gaussian shock shared by all units of a cluster at each time. Clusters
    are independent, but local exchangeability fails.
``locally-exchangeable``
    Errors whose law is exactly invariant to swapping the paired times (1,2),
    (3,4), ... jointly within each cluster; clusters are independent.
``cluster-contaminated``
    ``gamma_it + 1(t <= T0) * lambda`` with one ``lambda`` shared by every unit,
    so cluster independence fails while local exchangeability holds for even ``T0``.
``iid-gaussian``
    Standard normal errors, optionally with a time factor shared by all units
    (``cross_corr``) as a cluster-independence alternative.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
import pandas as pd
from scipy import stats

from .engine import (
    _QuadraticRandomization,
    default_weights,
    mosaic_resid,
    mosaic_test,
)
from .inference import mosaic_ci
from .invariance import make_invariance
from .panel import Clustering, PanelData
from .rng import normalize_seed, sign_bits

DEFAULT_ALPHAS = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class Family(str, Enum):
    ROBUSTNESS324 = "robustness324"
    LOCALLY_EXCHANGEABLE = "locally-exchangeable"
    CLUSTER_CONTAMINATED = "cluster-contaminated"
    IID_GAUSSIAN = "iid-gaussian"


@dataclass(frozen=True)
class DgpSpec:
    """Dimensions and parameters of a synthetic panel.

    ``beta`` is the coefficient on the single i.i.d. Gaussian covariate.
    ``eta_scale`` scales the shared cluster shock of ``robustness324``.
    ``cross_corr`` is the share of variance from a time factor common to all
    units (``iid-gaussian`` only). ``T0`` and ``lambda_scale`` shape the
    contamination; ``T0`` defaults to the largest even number ``<= T/2``.
    ``covariate_factor`` is the share of covariate variance coming from a
    common time factor whose loading varies smoothly across clusters, which
    are laid out on a line; with it the covariate picks up a shared
    disturbance differently in different regions.
    """

    N: int
    T: int
    M: int
    family: Family = Family.ROBUSTNESS324
    rho: float = 0.5
    seed: int = 0
    beta: float = 1.0
    eta_scale: float = 1.0
    cross_corr: float = 0.0
    T0: int | None = None
    lambda_scale: float = 1.0
    covariate_factor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.N < self.M or self.M < 1 or self.T < 1:
            raise ValueError(f"invalid dimensions N={self.N}, T={self.T}, M={self.M}")
        if self.family is Family.ROBUSTNESS324 and self.N % self.M:
            raise ValueError(f"robustness324 needs evenly sized clusters; M={self.M} does not divide N={self.N}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not 0.0 <= self.cross_corr <= 1.0:
            raise ValueError(f"cross_corr must lie in [0, 1], got {self.cross_corr}")
        if not 0.0 <= self.covariate_factor <= 1.0:
            raise ValueError(f"covariate_factor must lie in [0, 1], got {self.covariate_factor}")

    @property
    def contamination_end(self) -> int:
        return self.T0 if self.T0 is not None else 2 * (self.T // 4)

    def with_seed(self, seed: int) -> DgpSpec:
        return DgpSpec(**{**asdict(self), "seed": int(seed)})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        return d


def cluster_assignment(N: int, M: int) -> np.ndarray:
    """Contiguous, near-equal cluster blocks."""
    return np.minimum(np.arange(N) * M // N, M - 1)


def cluster_coordinates(M: int) -> np.ndarray:
    """Positions of the clusters on ``[-1, 1]``."""
    return np.linspace(-1.0, 1.0, M) if M > 1 else np.zeros(1)


def gen_covariate(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. standard normal, plus an optional spatially loaded time factor."""
    x = rng.standard_normal((spec.N, spec.T))
    c = spec.covariate_factor
    if c == 0.0:
        return x
    # Loadings have unit mean square across clusters.
    load = np.sqrt(3.0) * cluster_coordinates(spec.M)[cluster_assignment(spec.N, spec.M)]
    g = rng.standard_normal(spec.T)
    return np.sqrt(1.0 - c) * x + np.sqrt(c) * load[:, None] * g[None, :]


def gen_errors(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``(N, T)`` error matrix for ``spec``."""
    N, T, M = spec.N, spec.T, spec.M
    cl = cluster_assignment(N, M)
    fam = spec.family

    if fam is Family.ROBUSTNESS324:
        rho = spec.rho
        eps = np.empty((N, T))
        # Start from the stationary variance (2) of the Laplace AR(1) core.
        prev = rng.laplace(0.0, 1.0, size=N)
        innov_scale = np.sqrt(1.0 - rho**2)
        for t in range(T):
            gamma = rng.laplace(0.0, 1.0, size=N)
            eta = rng.standard_normal(M)[cl] * spec.eta_scale
            prev = rho * prev + (t + 1) ** 0.25 * innov_scale * gamma + eta
            eps[:, t] = prev
        return eps

    if fam is Family.LOCALLY_EXCHANGEABLE:
        n_pairs = (T + 1) // 2
        pair_of_t = np.arange(T) // 2
        scale = (1.0 + np.arange(n_pairs)) ** 0.25
        # Unit-level persistent component, shared by both slots of a pair.
        h = np.empty((N, n_pairs))
        h[:, 0] = rng.standard_normal(N)
        for k in range(1, n_pairs):
            h[:, k] = spec.rho * h[:, k - 1] + np.sqrt(1 - spec.rho**2) * rng.standard_normal(N)
        g = rng.standard_normal((M, n_pairs))[cl]  # cluster x pair, shared by both slots
        w = rng.standard_normal((M, T))[cl]  # cluster x time, i.i.d. across slots
        v = rng.laplace(0.0, 1.0 / np.sqrt(2.0), size=(N, T))
        return scale[pair_of_t] * (h[:, pair_of_t] + 0.5 * g[:, pair_of_t] + 0.5 * w + v)

    if fam is Family.CLUSTER_CONTAMINATED:
        eps = rng.standard_normal((N, T))
        lam = rng.standard_normal() * spec.lambda_scale
        eps[:, : spec.contamination_end] += lam
        return eps

    c = spec.cross_corr
    f = rng.standard_normal(T)
    return np.sqrt(1.0 - c) * rng.standard_normal((N, T)) + np.sqrt(c) * f[None, :]


@dataclass(frozen=True, eq=False)
class SimulatedPanel:
    """A synthetic panel together with its true coefficient and errors."""

    panel: PanelData
    beta: float
    errors: np.ndarray = field(repr=False)
    spec: DgpSpec | None = None
    coords: np.ndarray | None = field(default=None, repr=False)

    @property
    def z(self) -> np.ndarray:
        """The simulated covariate."""
        return self.panel.X[0]


def gen_panel(spec: DgpSpec) -> SimulatedPanel:
    """``Y = beta * X + eps`` with one Gaussian covariate, reproducible from ``spec.seed``."""
    if spec.T < 2 or spec.M < 2:
        raise ValueError("a panel needs T >= 2 and M >= 2")
    rng = np.random.default_rng(normalize_seed(spec.seed))
    x = gen_covariate(spec, rng)
    eps = gen_errors(spec, rng)
    clustering = Clustering(cluster_assignment(spec.N, spec.M), spec.M)
    panel = PanelData(spec.beta * x + eps, x[None], clustering)
    return SimulatedPanel(panel, spec.beta, eps, spec, cluster_coordinates(spec.M))


def _sim_seeds(seed: int, n_sims: int) -> np.ndarray:
    """``(n_sims, 2)`` seeds: data and randomization for each simulation."""
    root = np.random.SeedSequence(normalize_seed(seed))
    return np.array([c.generate_state(2, np.uint64) for c in root.spawn(n_sims)], dtype=np.uint64)


@dataclass
class CalibrationResult:
    table: pd.DataFrame
    pvalues: np.ndarray
    ks_distance: float
    config: dict

    def rejection_rate(self, alpha: float) -> float:
        return float(np.mean(self.pvalues <= alpha))

    def per_sim_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"sim": np.arange(self.pvalues.size), "p_value": self.pvalues})


def run_null_calibration(
    spec: DgpSpec,
    R: int = 199,
    n_sims: int = 1000,
    alphas=DEFAULT_ALPHAS,
    invariance: str = "local-exchangeability",
    two_sided: bool = False,
) -> CalibrationResult:
    """Empirical ``P(p <= alpha)`` of the mosaic test over ``n_sims`` panels from ``spec``.

    Also reports the Kolmogorov-Smirnov distance of the p-values from Uniform(0, 1).
    """
    P = make_invariance(invariance, spec.T)
    seeds = _sim_seeds(spec.seed, n_sims)
    pvals = np.empty(n_sims)
    for i, (dseed, tseed) in enumerate(seeds):
        sim = gen_panel(spec.with_seed(int(dseed)))
        pvals[i] = mosaic_test(sim.panel, P, R=R, seed=int(tseed), two_sided=two_sided).p_value
    alphas = np.asarray(alphas, dtype=float)
    rates = np.array([np.mean(pvals <= a) for a in alphas])
    table = pd.DataFrame({
        "alpha": alphas,
        "rejection_rate": rates,
        "mc_se": np.sqrt(alphas * (1 - alphas) / n_sims),
    })
    ks = float(stats.kstest(pvals, "uniform").statistic)
    config = {**spec.to_dict(), "R": R, "n_sims": n_sims, "invariance": invariance, "two_sided": two_sided}
    return CalibrationResult(table, pvals, ks, config)


def _raw_moments(x: np.ndarray, K: int = 3) -> np.ndarray:
    return np.array([np.mean(x**k) for k in range(1, K + 1)])


@dataclass
class RandomizationComparison:
    """Monte Carlo law of the centered statistic versus one dataset's randomization law.

    ``delta_mc`` holds ``(S - E~[S~]) / sigma`` across simulated datasets with
    ``sigma`` their sample SD; ``delta_rand`` holds ``(S~ - E~[S~]) / sigma`` for
    random sign patterns on the first dataset. ``rand_moments_exact`` are the
    randomization moments computed in closed form from the pairwise deltas.
    """

    delta_mc: np.ndarray
    delta_rand: np.ndarray
    sigma: float
    rand_moments_exact: np.ndarray
    config: dict

    @property
    def mc_moments(self) -> np.ndarray:
        return _raw_moments(self.delta_mc)

    @property
    def rand_moments(self) -> np.ndarray:
        return _raw_moments(self.delta_rand)

    @property
    def skewness_mc(self) -> float:
        return float(stats.skew(self.delta_mc))

    @property
    def skewness_rand(self) -> float:
        m2, m3 = self.rand_moments_exact[1], self.rand_moments_exact[2]
        return float(m3 / m2**1.5)

    def quantile_gaps(self, levels=(0.9, 0.95, 0.99)) -> pd.DataFrame:
        q_mc = np.quantile(self.delta_mc, levels)
        q_rand = np.quantile(self.delta_rand, levels)
        return pd.DataFrame({
            "level": levels,
            "q_mc": q_mc,
            "q_rand": q_rand,
            "relative_gap": np.abs(q_mc - q_rand) / np.abs(q_mc),
        })

    def moment_table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "k": [1, 2, 3],
            "mc": self.mc_moments,
            "rand_exact": self.rand_moments_exact,
            "rand_draws": self.rand_moments,
        })

    def histograms(self, bins: int = 40) -> pd.DataFrame:
        lo = min(self.delta_mc.min(), self.delta_rand.min())
        hi = max(self.delta_mc.max(), self.delta_rand.max())
        edges = np.linspace(lo, hi, bins + 1)
        d_mc, _ = np.histogram(self.delta_mc, edges, density=True)
        d_rand, _ = np.histogram(self.delta_rand, edges, density=True)
        return pd.DataFrame({"left": edges[:-1], "right": edges[1:], "density_mc": d_mc, "density_rand": d_rand})


def run_randomization_vs_marginal(
    spec: DgpSpec,
    R: int = 10_000,
    n_sims: int = 2000,
    invariance: str = "local-exchangeability",
) -> RandomizationComparison:
    """Compare the law of the centered quadratic statistic with its randomization law."""
    P = make_invariance(invariance, spec.T)
    seeds = _sim_seeds(spec.seed, n_sims)
    centered = np.empty(n_sims)
    first = None
    for i, (dseed, _) in enumerate(seeds):
        sim = gen_panel(spec.with_seed(int(dseed)))
        mr = mosaic_resid(sim.panel, P)
        quad = _QuadraticRandomization(mr.residuals, default_weights(sim.panel.clustering), P)
        centered[i] = quad.delta.sum()
        if first is None:
            first = quad
    sigma = float(np.std(centered, ddof=1))
    B = sign_bits(int(seeds[0, 1]), R, spec.M)
    rand = (first(2.0 * B - 1.0) - first.c0) / sigma

    M = spec.M
    dmat = np.zeros((M, M))
    dmat[first.iu] = first.delta
    dmat = dmat + dmat.T
    exact = np.array([
        0.0,
        np.sum(first.delta**2) / sigma**2,
        np.trace(dmat @ dmat @ dmat) / sigma**3,
    ])
    config = {**spec.to_dict(), "R": R, "n_sims": n_sims, "invariance": invariance}
    return RandomizationComparison(centered / sigma, rand, sigma, exact, config)


@dataclass
class CoverageResult:
    covered: np.ndarray
    widths: np.ndarray
    beta_hats: np.ndarray
    ses: np.ndarray
    config: dict

    @property
    def coverage(self) -> float:
        return float(np.mean(self.covered))

    def per_sim_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "sim": np.arange(self.covered.size),
            "covered": self.covered,
            "width": self.widths,
            "beta_hat": self.beta_hats,
            "se": self.ses,
        })


def run_ci_coverage(
    spec: DgpSpec,
    alpha: float = 0.1,
    R: int = 499,
    n_sims: int = 1000,
    invariance: str = "local-exchangeability",
) -> CoverageResult:
    """Fraction of mosaic intervals containing the true coefficient."""
    P = make_invariance(invariance, spec.T)
    seeds = _sim_seeds(spec.seed, n_sims)
    covered = np.empty(n_sims, dtype=bool)
    widths, betas, ses = np.empty(n_sims), np.empty(n_sims), np.empty(n_sims)
    for i, (dseed, cseed) in enumerate(seeds):
        sim = gen_panel(spec.with_seed(int(dseed)))
        p = sim.panel
        ci = mosaic_ci(p.Y, p.X[0], p.X[1:], p.clustering, P, alpha=alpha, R=R, seed=int(cseed))
        covered[i] = ci.lower <= sim.beta <= ci.upper
        widths[i], betas[i], ses[i] = ci.upper - ci.lower, ci.beta_hat, ci.se
    config = {**spec.to_dict(), "alpha": alpha, "R": R, "n_sims": n_sims, "invariance": invariance}
    return CoverageResult(covered, widths, betas, ses, config)


def run_split_diagnostics(
    spec: DgpSpec,
    methods=("ols-homoskedastic", "ols-cluster", "mosaic-local-exchangeability"),
    n_datasets: int = 200,
    splits_per_dataset: int = 5,
    alphas=(0.05,),
    R: int = 199,
) -> pd.DataFrame:
    """Split-sample diagnostic rows pooled over independent simulated panels."""
    from .diagnostics import run_diagnostics

    seeds = _sim_seeds(spec.seed, n_datasets)
    frames = []
    for i, (dseed, sseed) in enumerate(seeds):
        sim = gen_panel(spec.with_seed(int(dseed)))
        p = sim.panel
        sub = PanelData(p.Y, p.X[1:], p.clustering)
        rep = run_diagnostics(
            sub, p.X[0], methods=methods, n_splits=splits_per_dataset,
            alphas=alphas, seed=int(sseed), R=R, coords=sim.coords,
        )
        frames.append(rep.rows.assign(dataset=i))
    return pd.concat(frames, ignore_index=True)


__all__ = [
    "DEFAULT_ALPHAS",
    "CalibrationResult",
    "CoverageResult",
    "DgpSpec",
    "Family",
    "RandomizationComparison",
    "SimulatedPanel",
    "cluster_assignment",
    "cluster_coordinates",
    "gen_covariate",
    "gen_errors",
    "gen_panel",
    "run_ci_coverage",
    "run_null_calibration",
    "run_randomization_vs_marginal",
    "run_split_diagnostics",
]
