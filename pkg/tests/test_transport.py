import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sm_transport.errors import ConfigurationError, PreconditionError
from sm_transport.flow import SpatialGrid, bump_drift, constant_drift, linear_drift, sine_drift, zero_drift
from sm_transport.noise import NoiseSpec, TimeGrid, sample_path
from sm_transport.quadrature import simpson_nodes
from sm_transport.symint import RefinementLadder
from sm_transport.transport import (FrozenField, InitialDatum, TestBump, TransportScenario,
                                    WeakResidualRow, bump_datum, default_battery, residual_study,
                                    smoothed_step, solve_transport, time_indices, weak_residual,
                                    weak_residuals, write_residual_csv, zero_datum)

from conftest import sine_path

# mpmath, 30 digits: X_1(0) for b = x / 2 on mu_t = sin t
LINEAR_SHIFT = 1.11654437377911257710
GRID = SpatialGrid(10.0, 2001)


def wiener(n=512, seed=1):
    return sample_path(NoiseSpec("wiener", TimeGrid(1.0, n), seed))


class TestTestBump:
    @pytest.mark.parametrize("c,w", [(-2.0, 0.5), (0.0, 1.0), (1.5, 2.0)])
    def test_invariants(self, c, w):
        phi = TestBump(c, w)
        assert phi.support == (c - w, c + w)
        x = np.linspace(c - 1.5 * w, c + 1.5 * w, 301)
        assert np.all(phi(x) >= 0)
        assert np.all(phi(x[np.abs(x - c) >= w]) == 0)
        assert phi(c + w) == 0 and phi.prime(c - w) == 0
        h = 1e-6
        fd = (phi(x + h) - phi(x - h)) / (2 * h)
        assert np.max(np.abs(fd - phi.prime(x))) <= 1e-5

    def test_bad_width(self):
        with pytest.raises(ConfigurationError):
            TestBump(0.0, 0.0)


class TestSolutionFormula:
    def test_initial_time(self):
        u = solve_transport(bump_datum(), sine_drift(), wiener(), GRID)
        x = np.linspace(-5, 5, 41)
        np.testing.assert_allclose(u(0, x), bump_datum()(x), atol=1e-10)

    def test_zero_drift_translation(self):
        p = wiener()
        u = solve_transport(bump_datum(), zero_drift(), p, GRID)
        x = np.linspace(-4, 4, 33)
        for k in (100, 333, 512):
            np.testing.assert_allclose(u(k, x), bump_datum()(x - p.values[k]), rtol=0, atol=1e-10)

    def test_constant_drift_translation(self):
        p = wiener()
        datum = smoothed_step()
        u = solve_transport(datum, constant_drift(0.6), p, GRID)
        x = np.linspace(-4, 4, 33)
        k = 400
        np.testing.assert_allclose(u(k, x), datum(x - 0.6 * p.times[k] - p.values[k]), atol=1e-10)

    def test_peak_rides_characteristic(self):
        u = solve_transport(bump_datum(), linear_drift(0.5), sine_path(1024), GRID)
        assert abs(u(1024, LINEAR_SHIFT) - bump_datum()(0.0)) <= 1e-8

    def test_constant_along_characteristics(self):
        u = solve_transport(bump_datum(0.5, 2.0), bump_drift(0.8), wiener(), GRID)
        k = 512
        i = slice(700, 1300, 10)
        np.testing.assert_allclose(u(k, u.flow.X[k, i]), u.datum(GRID.nodes[i]), atol=1e-8)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31), k=st.integers(0, 128))
    def test_range_preserved(self, seed, k):
        datum = bump_datum(0.0, 1.5, 2.0)
        u = solve_transport(datum, sine_drift(0.7, 1.3), wiener(128, seed), SpatialGrid(10.0, 401))
        vals = u(k, np.linspace(-6, 6, 121))
        assert np.all(np.abs(vals) <= datum.bound)
        assert np.all(np.isfinite(vals))

    def test_table_matches_pointwise(self):
        u = solve_transport(bump_datum(), bump_drift(), wiener(), GRID)
        x = np.linspace(-3, 3, 25)
        table = u.table([0, 256, 512], x)
        for row, k in enumerate([0, 256, 512]):
            np.testing.assert_allclose(table[row], u(k, x), atol=1e-8)

    def test_spatial_derivative(self):
        u = solve_transport(bump_datum(), bump_drift(), wiener(), GRID)
        x = np.linspace(-2, 2, 9)
        h = 1e-5
        fd = (u(300, x + h) - u(300, x - h)) / (2 * h)
        np.testing.assert_allclose(u.dx(300, x), fd, atol=1e-6)

    def test_datum_check(self):
        bad = InitialDatum(np.sin, lambda x: 0 * x, label="bad")
        with pytest.raises(PreconditionError):
            solve_transport(bad, zero_drift(), wiener(16), GRID)


class TestWeakResidual:
    def test_initial_time_exact(self):
        u = solve_transport(bump_datum(), bump_drift(), wiener(), GRID)
        row = weak_residual(u, TestBump(0.0, 1.0), 0)
        assert row.residual == 0.0 and row.lhs == row.rhs_initial

    def test_zero_datum(self):
        u = solve_transport(zero_datum(), sine_drift(), wiener(), GRID)
        rows = weak_residuals(u, default_battery(), [128, 256, 512])
        assert max(abs(r.residual) for r in rows) <= 1e-13

    def test_support_outside_window(self):
        u = solve_transport(bump_datum(), bump_drift(), wiener(), SpatialGrid(4.0, 401))
        with pytest.raises(ConfigurationError, match="support"):
            weak_residual(u, TestBump(3.0, 1.0), 10)

    def test_frozen_probe_detects_non_solution(self):
        p = wiener(2048, 5)
        datum = bump_datum()
        phi = TestBump(1.5, 2.0)
        x, w = simpson_nodes(*phi.support, 512)
        assert abs(datum(x) * phi.prime(x) @ w) > 1e-3
        sol = solve_transport(datum, zero_drift(), p, GRID)
        frozen = FrozenField(datum, zero_drift(), p, GRID)
        ks = time_indices(2048)
        r_sol = max(abs(r.residual) for r in weak_residuals(sol, [phi], ks))
        r_frozen = max(abs(r.residual) for r in weak_residuals(frozen, [phi], ks))
        assert r_frozen >= 10 * r_sol

    def test_smooth_path_order(self):
        ladder = RefinementLadder([64, 128, 256, 512], "deterministic", path_fn=np.sin)
        scenario = TransportScenario(bump_datum(), bump_drift(0.8), GRID)
        rep = residual_study(scenario, ladder)
        assert rep.summary["estimated_order"] >= 1.0
        assert rep.summary["median_ratio"] >= 1.8

    def test_zero_drift_wiener_decay(self):
        ladder = RefinementLadder([256, 512, 1024], "wiener", 40, 4)
        rep = residual_study(TransportScenario(bump_datum(), zero_drift(), GRID), ladder)
        assert rep.summary["median_ratio"] >= 1.2

    def test_time_indices(self):
        assert time_indices(256) == [64, 128, 192, 256]
        with pytest.raises(ConfigurationError):
            time_indices(10, [0.25])

    def test_csv(self, tmp_path):
        u = solve_transport(bump_datum(), bump_drift(), wiener(64), GRID)
        rows = weak_residuals(u, default_battery(), [32, 64], level=2, seed=9)
        write_residual_csv(rows, tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == ",".join(WeakResidualRow.COLUMNS)
        assert lines[0] == "level,seed,phi_center,phi_width,t,lhs,rhs_initial,rhs_drift,rhs_noise,residual"
        assert len(lines) == 1 + 6
