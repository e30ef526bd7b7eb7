import json
import math

import numpy as np
import pytest

from sm_transport.report import ConvergenceReport, consecutive_ratios, dump_json, estimated_order


def make_report():
    rep = ConvergenceReport("demo", ["level", "n_steps", "seed", "abs_error"])
    for seed, base in ((2, 0.8), (1, 1.0)):
        for level in (2, 0, 1):
            rep.add(level=level, n_steps=8 * 2 ** level, seed=seed, abs_error=base / 4 ** level)
    return rep


class TestRatios:
    def test_consecutive(self):
        assert consecutive_ratios([1.0, 0.5, 0.125]) == [2.0, 4.0]

    def test_floor_skips_exact_levels(self):
        assert consecutive_ratios([1e-3, 1e-16, 1e-17]) == []

    def test_order(self):
        assert estimated_order([4.0, 4.0]) == pytest.approx(2.0)
        assert math.isnan(estimated_order([]))


class TestConvergenceReport:
    def test_summary_recomputable(self):
        rep = make_report()
        s = dict(rep.summarize(threshold=0.06))
        assert s["median_ratio"] == pytest.approx(4.0)
        assert s["estimated_order"] == pytest.approx(2.0)
        assert s["quantile_pass_fraction"] == 0.5
        assert rep.summarize(threshold=0.06) == s

    def test_rows_sorted(self):
        rep = make_report()
        rep.sort()
        keys = [(r["level"], r["seed"]) for r in rep.rows]
        assert keys == sorted(keys)

    def test_missing_column(self):
        with pytest.raises(KeyError):
            make_report().add(level=0, seed=0)

    def test_csv_and_json(self, tmp_path):
        rep = make_report()
        rep.summarize()
        rep.to_csv(tmp_path / "r.csv")
        rep.to_json(tmp_path / "r.json")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "level,n_steps,seed,abs_error"
        assert lines[1] == "0,8,1,1.0"
        data = json.loads((tmp_path / "r.json").read_text())
        assert data["study"] == "demo" and data["summary"]["n_seeds"] == 2

    def test_json_nan_is_null(self, tmp_path):
        dump_json({"x": float("nan"), "y": np.float64(1.5), "z": np.bool_(True)}, tmp_path / "a.json")
        assert json.loads((tmp_path / "a.json").read_text()) == {"x": None, "y": 1.5, "z": True}
