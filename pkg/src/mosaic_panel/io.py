"""Long-format CSV ingestion and export.

The input has one row per (unit, time) cell with columns ``unit``, ``time``,
``y``, optionally a covariate of interest, covariates ``x_*`` and a
``cluster`` column that must be constant within each unit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from os import PathLike

import numpy as np
import pandas as pd

from .exceptions import BadCluster, DuplicateCell, InvalidPanel, UnbalancedPanel
from .invariance import Invariance
from .panel import Clustering, PanelData, residual_df

REQUIRED = ("unit", "time", "y")


@dataclass(frozen=True, eq=False)
class IngestedPanel:
    """A pivoted panel plus the covariate of interest and provenance.

    ``covariate_names`` labels the entries of ``panel.X``; ``time_order`` is
    the resolved, sorted list of time labels as strings.
    """

    panel: PanelData
    z: np.ndarray | None
    z_name: str | None
    covariate_names: tuple[str, ...]
    time_order: tuple[str, ...]
    time_kind: str
    notes: tuple[str, ...] = field(default=())


def _sorted_times(values: pd.Series) -> tuple[list, str]:
    uniq = pd.unique(values)
    num = pd.to_numeric(pd.Series(uniq), errors="coerce")
    if not num.isna().any():
        order = np.argsort(num.to_numpy(), kind="stable")
        return [uniq[i] for i in order], "numeric"
    try:
        dates = pd.to_datetime(pd.Series(uniq).astype(str), format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise InvalidPanel(
            "time column must be numeric or ISO-8601 dates so that periods can be ordered"
        ) from exc
    order = np.argsort(dates.to_numpy(), kind="stable")
    return [uniq[i] for i in order], "iso-date"


def read_long(
    source: str | PathLike | pd.DataFrame,
    z: str | None = None,
    unit_fe: bool = False,
    time_fe: bool = False,
) -> IngestedPanel:
    """Pivot a long-format panel to ``N x T`` matrices.

    Parameters
    ----------
    source : path or DataFrame
        UTF-8, comma-delimited CSV with a header, or an equivalent frame.
    z : str, optional
        Column holding the covariate of interest; it is excluded from the controls.
    unit_fe, time_fe : bool
        Append one dummy matrix per unit and/or per period to the controls.

    Raises
    ------
    InvalidPanel
        Missing required columns or an unorderable time column.
    DuplicateCell
        A (unit, time) pair appears twice.
    UnbalancedPanel
        Some (unit, time) cells are absent; all of them are listed.
    BadCluster
        The cluster label changes within a unit.
    """
    if isinstance(source, pd.DataFrame):
        df = source.copy()
    else:
        df = pd.read_csv(source, encoding="utf-8", dtype={"unit": str, "cluster": str})
    missing_cols = [c for c in REQUIRED if c not in df.columns]
    if missing_cols:
        raise InvalidPanel(f"missing required columns {missing_cols}")
    if z is not None and z not in df.columns:
        raise InvalidPanel(f"covariate of interest {z!r} is not a column")
    x_cols = [c for c in df.columns if c.startswith("x_") and c != z]

    dup = df.duplicated(["unit", "time"], keep=False)
    if dup.any():
        cells = df.loc[dup, ["unit", "time"]].drop_duplicates().itertuples(index=False)
        raise DuplicateCell(f"duplicate (unit, time) cells: {[tuple(c) for c in cells][:10]}")

    times, time_kind = _sorted_times(df["time"])
    units = sorted(pd.unique(df["unit"]), key=str)
    full = pd.MultiIndex.from_product([units, times], names=["unit", "time"])
    indexed = df.set_index(["unit", "time"])
    absent = full.difference(indexed.index)
    if len(absent):
        raise UnbalancedPanel(sorted(absent.tolist(), key=lambda c: (str(c[0]), times.index(c[1]))))
    indexed = indexed.reindex(full)

    def grid(col: str) -> np.ndarray:
        vals = pd.to_numeric(indexed[col], errors="coerce").to_numpy(dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InvalidPanel(f"column {col!r} has missing or non-numeric values")
        return vals.reshape(len(units), len(times))

    notes = []
    if "cluster" in df.columns:
        per_unit = df.groupby("unit")["cluster"].nunique(dropna=False)
        bad = per_unit[per_unit > 1].index.tolist()
        if bad:
            raise BadCluster(f"cluster label varies within units {bad[:10]}")
        labels = df.groupby("unit")["cluster"].first().reindex(units).to_numpy()
        clustering = Clustering.from_labels(labels.astype(str))
    else:
        msg = "no cluster column; treating each unit as its own cluster (consider --merge-clusters)"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
        clustering = Clustering.singletons(len(units))

    mats = [grid(c) for c in x_cols]
    names = list(x_cols)
    N, T = len(units), len(times)
    if unit_fe:
        for i, u in enumerate(units):
            d = np.zeros((N, T))
            d[i] = 1.0
            mats.append(d)
            names.append(f"fe_unit_{u}")
    if time_fe:
        for t, lab in enumerate(times):
            d = np.zeros((N, T))
            d[:, t] = 1.0
            mats.append(d)
            names.append(f"fe_time_{lab}")
    X = np.stack(mats) if mats else np.zeros((0, N, T))
    panel = PanelData(grid("y"), X, clustering, tuple(units), tuple(range(T)))
    return IngestedPanel(
        panel=panel,
        z=grid(z) if z is not None else None,
        z_name=z,
        covariate_names=tuple(names),
        time_order=tuple(str(t) for t in times),
        time_kind=time_kind,
        notes=tuple(notes),
    )


def merge_small_clusters(
    panel: PanelData, P: Invariance, min_df: int = 1, z: np.ndarray | None = None
) -> tuple[PanelData, list[tuple[str, str]]]:
    """Greedily merge the two smallest clusters until every cluster has ``>= min_df``
    residual degrees of freedom under the augmented design.

    Size ties are broken by cluster index. Merging stops at two clusters even if
    the check still fails, so the fit reports the problem. ``z``, when given, is
    included in the design for the check, as it is for interval estimation.
    Returns the new panel and the list of merged label pairs.
    """
    X = panel.X if z is None else np.concatenate([np.asarray(z, dtype=float)[None], panel.X])
    assignment = panel.clustering.assignment.copy()
    labels = [str(lab) for lab in panel.clustering.labels]
    merges = []
    while len(labels) > 2:
        clustering = Clustering(assignment, len(labels), tuple(labels))
        if residual_df(X, clustering, P).min() >= min_df:
            break
        a, b = sorted(np.lexsort((np.arange(len(labels)), clustering.sizes))[:2])
        merges.append((labels[a], labels[b]))
        labels[a] = f"{labels[a]}+{labels[b]}"
        del labels[b]
        assignment[assignment == b] = a
        assignment[assignment > b] -= 1
    clustering = Clustering(assignment, len(labels), tuple(labels))
    merged = PanelData(panel.Y, panel.X, clustering, panel.unit_ids, panel.time_ids)
    return merged, merges


def export_long(ing: IngestedPanel) -> pd.DataFrame:
    """Inverse of :func:`read_long` for the data columns (dummies are dropped)."""
    p = ing.panel
    rows = {
        "unit": np.repeat(np.asarray(p.unit_ids, dtype=object), p.T),
        "time": np.tile(np.asarray(ing.time_order, dtype=object), p.N),
        "y": p.Y.ravel(),
    }
    if ing.z is not None:
        rows[ing.z_name] = ing.z.ravel()
    for d, name in enumerate(ing.covariate_names):
        if name.startswith("x_"):
            rows[name] = p.X[d].ravel()
    rows["cluster"] = np.repeat(
        np.asarray(p.clustering.labels, dtype=object)[p.clustering.assignment], p.T
    )
    return pd.DataFrame(rows)
