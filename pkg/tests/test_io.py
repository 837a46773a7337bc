"""Tests for long-format ingestion, fixed-effect expansion and cluster merging."""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from mosaic_panel.exceptions import BadCluster, DegenerateCluster, DuplicateCell, InvalidPanel, UnbalancedPanel
from mosaic_panel.engine import mosaic_resid
from mosaic_panel.invariance import make_invariance
from mosaic_panel.io import export_long, merge_small_clusters, read_long
from mosaic_panel.panel import residual_df

DATA = Path(__file__).parent / "data"


def _long(units=("a", "b"), times=(1, 2), cluster=True):
    rows = []
    for i, u in enumerate(units):
        for k, t in enumerate(times):
            row = {"unit": u, "time": t, "y": 10 * i + float(k + 1), "x_1": i - float(k + 1)}
            if cluster:
                row["cluster"] = f"g{i}"
            rows.append(row)
    return pd.DataFrame(rows)


class TestReadLong:
    def test_two_by_two(self):
        ing = read_long(_long())
        np.testing.assert_array_equal(ing.panel.Y, [[1, 2], [11, 12]])
        np.testing.assert_array_equal(ing.panel.X[0], [[-1, -2], [0, -1]])
        assert ing.covariate_names == ("x_1",)
        assert ing.time_order == ("1", "2")

    def test_shuffled_rows_and_numeric_time_order(self):
        df = _long(times=(10, 2, 1)).sample(frac=1.0, random_state=0)
        ing = read_long(df)
        assert ing.time_order == ("1", "2", "10")
        np.testing.assert_array_equal(ing.panel.Y[0], [3, 2, 1])

    def test_iso_dates(self):
        df = _long(times=("2020-03-01", "2020-01-15", "2020-02-01"))
        ing = read_long(df)
        assert ing.time_kind == "iso-date"
        assert ing.time_order == ("2020-01-15", "2020-02-01", "2020-03-01")

    def test_unorderable_time(self):
        with pytest.raises(InvalidPanel, match="ISO"):
            read_long(_long(times=("spring", "fall")))

    def test_missing_cell_listed(self):
        df = _long()
        df = df[~((df.unit == "b") & (df.time == 2))]
        with pytest.raises(UnbalancedPanel) as err:
            read_long(df)
        assert err.value.missing == [("b", 2)]
        assert "('b', 2)" in str(err.value)

    def test_duplicate_cell(self):
        df = pd.concat([_long(), _long().iloc[:1]])
        with pytest.raises(DuplicateCell):
            read_long(df)

    def test_cluster_must_be_constant(self):
        df = _long()
        df.loc[1, "cluster"] = "other"
        with pytest.raises(BadCluster):
            read_long(df)

    def test_default_unit_clusters_warn(self):
        with pytest.warns(UserWarning, match="own cluster"):
            ing = read_long(_long(cluster=False))
        assert ing.panel.M == 2 and ing.notes

    def test_missing_required_column(self):
        with pytest.raises(InvalidPanel, match="required"):
            read_long(_long().drop(columns="y"))

    def test_non_numeric_values(self):
        df = _long()
        df["y"] = df["y"].astype(object)
        df.loc[0, "y"] = "n/a"
        with pytest.raises(InvalidPanel, match="'y'"):
            read_long(df)

    def test_unit_fixed_effects(self):
        ing = read_long(_long(units=("a", "b", "c")), unit_fe=True)
        X = ing.panel.X
        assert X.shape[0] == 4
        for k in range(3):
            d = X[1 + k]
            assert np.all(d[k] == 1.0) and d.sum() == d.shape[1]

    def test_time_fixed_effects(self):
        ing = read_long(_long(times=(1, 2, 3)), time_fe=True)
        assert ing.covariate_names[1:] == ("fe_time_1", "fe_time_2", "fe_time_3")
        np.testing.assert_array_equal(ing.panel.X[2][:, 1], 1.0)

    def test_z_column_separated(self):
        df = _long()
        df["x_z"] = [1.0, 2.0, 3.0, 5.0]
        ing = read_long(df, z="x_z")
        assert ing.covariate_names == ("x_1",)
        np.testing.assert_array_equal(ing.z, [[1, 2], [3, 5]])


class TestRoundTrip:
    def test_fixture_round_trip(self):
        ing = read_long(DATA / "null_panel.csv", z="treatment")
        again = read_long(export_long(ing), z="treatment")
        np.testing.assert_array_equal(again.panel.Y, ing.panel.Y)
        np.testing.assert_array_equal(again.panel.X, ing.panel.X)
        np.testing.assert_array_equal(again.z, ing.z)
        np.testing.assert_array_equal(again.panel.clustering.assignment, ing.panel.clustering.assignment)
        assert again.time_order == ing.time_order
        assert again.panel.unit_ids == ing.panel.unit_ids

    def test_csv_round_trip(self, tmp_path):
        ing = read_long(DATA / "noiseless_panel.csv", z="treatment")
        path = tmp_path / "out.csv"
        export_long(ing).to_csv(path, index=False)
        again = read_long(path, z="treatment")
        np.testing.assert_array_equal(again.panel.Y, ing.panel.Y)


class TestMergeClusters:
    def _singleton_panel(self):
        rng = np.random.default_rng(0)
        rows = [
            {"unit": f"u{i}", "time": t, "y": rng.standard_normal(), "x_1": rng.standard_normal(), "x_2": rng.standard_normal()}
            for i in range(8) for t in range(2)
        ]
        with pytest.warns(UserWarning):
            return read_long(pd.DataFrame(rows)).panel

    def test_degenerate_without_merging(self):
        panel = self._singleton_panel()
        with pytest.raises(DegenerateCluster):
            mosaic_resid(panel, make_invariance("time-reversal", 2))

    def test_merge_clears_check(self):
        panel = self._singleton_panel()
        P = make_invariance("time-reversal", 2)
        merged, merges = merge_small_clusters(panel, P, min_df=1)
        assert merges and merged.M < panel.M
        assert residual_df(merged.X, merged.clustering, P).min() >= 1
        mosaic_resid(merged, P)
        assert "+" in merged.clustering.labels[0]

    def test_no_merge_when_fine(self):
        ing = read_long(DATA / "null_panel.csv")
        merged, merges = merge_small_clusters(ing.panel, make_invariance("local-exchangeability", 10), 1)
        assert merges == [] and merged.M == ing.panel.M
