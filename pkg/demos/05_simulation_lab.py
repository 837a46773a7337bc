"""
Simulation lab
==============

Null calibration, the randomization distribution against the Monte Carlo
distribution of the centred statistic, and interval coverage.
"""

from mosaic_panel import (
    DgpSpec, run_ci_coverage, run_null_calibration, run_randomization_vs_marginal,
)

cal = run_null_calibration(DgpSpec(N=40, T=10, M=8, family="locally-exchangeable", seed=5),
                           R=199, n_sims=1000)
print("null calibration\n", cal.table.round(3), f"\nKS distance {cal.ks_distance:.3f}")

cmp_ = run_randomization_vs_marginal(DgpSpec(N=200, T=10, M=100, seed=5), R=2000, n_sims=300)
print("\nmoments (standardized)\n", cmp_.moment_table().round(3))
print(f"skewness: Monte Carlo {cmp_.skewness_mc:.2f}, randomization {cmp_.skewness_rand:.2f}")

cov = run_ci_coverage(DgpSpec(N=40, T=10, M=8, family="locally-exchangeable", seed=5),
                      alpha=0.1, R=199, n_sims=200)
print(f"\n90% interval coverage {cov.coverage:.3f}")
