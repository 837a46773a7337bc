"""Regenerate the CSV fixtures under tests/data (run from the repository root)."""

from pathlib import Path

import numpy as np

from mosaic_panel.io import export_long, read_long
from mosaic_panel.simlab import DgpSpec, gen_panel

OUT = Path("tests/data")


def to_frame(Y, z, x, clusters):
    import pandas as pd

    N, T = Y.shape
    return pd.DataFrame({
        "unit": np.repeat([f"u{i:02d}" for i in range(N)], T),
        "time": np.tile(np.arange(2001, 2001 + T), N),
        "y": Y.ravel(),
        "treatment": z.ravel(),
        "x_1": x.ravel(),
        "cluster": np.repeat([f"c{c}" for c in clusters], T),
    })


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    # Null fixture: locally exchangeable errors, independent clusters.
    sim = gen_panel(DgpSpec(N=40, T=10, M=8, family="locally-exchangeable", seed=20240101))
    rng = np.random.default_rng(5)
    x = rng.standard_normal((40, 10))
    Y = np.round(sim.panel.Y + 0.5 * x, 10)
    to_frame(Y, np.round(sim.z, 10), np.round(x, 10), sim.panel.clustering.assignment).to_csv(
        OUT / "null_panel.csv", index=False
    )
    # Noiseless fixture: y = 2.5 * treatment + x_1, no error at all.
    rng = np.random.default_rng(6)
    z = np.round(rng.standard_normal((24, 6)), 6)
    x = np.round(rng.standard_normal((24, 6)), 6)
    to_frame(2.5 * z + x, z, x, np.arange(24) // 4).to_csv(OUT / "noiseless_panel.csv", index=False)


if __name__ == "__main__":
    main()
