"""
Mosaic confidence intervals
===========================

Interval for one coefficient under local exchangeability, compared with
pooled OLS and its cluster-robust standard error.
"""

import numpy as np

from mosaic_panel import Clustering, make_invariance, mosaic_ci, ols_panel

rng = np.random.default_rng(2)
N, T, M = 200, 10, 20
clustering = Clustering(np.arange(N) % M, M)
X = rng.standard_normal((1, N, T))
Z = rng.standard_normal((N, T)) + 0.3 * X[0]
cluster_shock = rng.standard_normal((M, T))[clustering.assignment]
Y = 1.0 * Z + X[0] + cluster_shock + rng.standard_normal((N, T))

P = make_invariance("local-exchangeability", T)
ci = mosaic_ci(Y, Z, X, clustering, P, alpha=0.05, R=999, seed=3)
ols = ols_panel(Y, Z, X, clustering)
half = 1.96 * ols.se_cluster_robust
print(f"mosaic: beta {ci.beta_hat:.3f}, 95% CI [{ci.lower:.3f}, {ci.upper:.3f}], se {ci.se:.3f}")
print(f"OLS   : beta {ols.beta:.3f}, 95% CI [{ols.beta - half:.3f}, {ols.beta + half:.3f}], CRV1 se {ols.se_cluster_robust:.3f}")
