"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import filecmp
import math

import numpy as np
import pytest

from sm_transport.flow import (SpatialGrid, bump_drift, constant_drift, linear_drift, sine_drift,
                               solve_flow, zero_drift)
from sm_transport.harness import DEFAULT_CONFIG, ScenarioConfig, run_scenario
from sm_transport.harness.catalog import chain_rule_integrand, fubini_integrands, random_commutator_pair
from sm_transport.noise import (NoiseSpec, TimeGrid, deterministic_path, empirical_covariance,
                                sample_path, theoretical_covariance)
from sm_transport.symint import RefinementLadder, chain_rule_rhs, chain_rule_study, fubini_check, symmetric_sum
from sm_transport.transport import (FrozenField, TransportScenario, bump_datum, residual_study,
                                    solve_transport, time_indices, weak_residuals, zero_datum)
from sm_transport.uniqueness import (ShiftedField, commutator, commutator_decay,
                                     energy_identity_check, gronwall_bound, uniqueness_pipeline)

from conftest import draw_paths, sine_path

# mpmath, 30 digits: X_1(x) = e^{1/2} x + LINEAR_SHIFT for b = x / 2 on mu_t = sin t
LINEAR_SHIFT = 1.11654437377911257710
LEVELS = [256, 512, 1024, 2048, 4096]
EPS = [0.4, 0.2, 0.1, 0.05]


@pytest.fixture
def verdict(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
        assert passed, detail
    return emit


def test_c01_telescoping(verdict):
    worst = 0.0
    for kind, hurst in (("wiener", None), ("fbm", 0.75), ("subfbm", 0.75)):
        for n in LEVELS:
            for p in draw_paths(kind, n, 20, hurst, base_seed=100):
                exact = p.terminal ** 2 / 2
                worst = max(worst, abs(symmetric_sum(p.values, p) - exact) / abs(exact))
    for n in LEVELS:
        p = sine_path(n)
        exact = p.terminal ** 2 / 2
        worst = max(worst, abs(symmetric_sum(p.values, p) - exact) / abs(exact))
    verdict(1, "telescoping", worst <= 1e-13, f"max relative error {worst:.2e} (tol 1e-13)")


def test_c02_chain_rule(verdict):
    f = chain_rule_integrand("sin_exp")
    rep = chain_rule_study(f, RefinementLadder(LEVELS, "wiener", 1000, 50), threshold=1e-2)
    median, frac = rep.summary["median_ratio"], rep.summary["quantile_pass_fraction"]
    p = sine_path(4096)
    smooth = abs(symmetric_sum(f(p.values, p.times), p) - chain_rule_rhs(f, p))
    ok = median >= 1.2 and frac >= 0.9 and smooth <= 1e-6
    verdict(2, "chain rule", ok,
            f"median ratio {median:.3f} (>= 1.2), pass fraction {frac:.2f} (>= 0.9), "
            f"smooth-path error {smooth:.2e} (<= 1e-6)")


def test_c03_fubini(verdict):
    mu = sample_path(NoiseSpec("wiener", TimeGrid(1.0, 2048), 2000))
    sep, nonsep = [], []
    for f, separable in fubini_integrands():
        lhs, rhs = fubini_check(f, mu)
        (sep if separable else nonsep).append(abs(lhs - rhs) / (1.0 if separable else max(abs(lhs), 1.0)))
    ok = max(sep) <= 1e-10 and max(nonsep) <= 1e-6
    verdict(3, "Fubini", ok, f"separable {max(sep):.2e} (<= 1e-10), "
                             f"non-separable scaled {max(nonsep):.2e} (<= 1e-6)")


def test_c04_flow(verdict):
    grid = SpatialGrid(10.0, 2001)
    p = sample_path(NoiseSpec("wiener", TimeGrid(1.0, 1024), 3000))
    x = grid.nodes
    e_zero = np.max(np.abs(solve_flow(zero_drift(), p, grid).X - x - p.values[:, None]))
    e_const = np.max(np.abs(solve_flow(constant_drift(0.7), p, grid).X
                            - x - 0.7 * p.times[:, None] - p.values[:, None]))
    e_lin = np.max(np.abs(solve_flow(linear_drift(0.5), sine_path(1024), grid).X[-1]
                          - (math.exp(0.5) * x + LINEAR_SHIFT)))
    fd_worst, exhaustive = 0.0, True
    fd_tol = max(1e-3, 5 * grid.dx ** 2)
    for drift in (bump_drift(), sine_drift(0.8, 2.0), linear_drift(-0.4), constant_drift(1.0)):
        for seed in (1, 2, 3):
            path = sample_path(NoiseSpec("wiener", TimeGrid(1.0, 1024), seed))
            flow = solve_flow(drift, path, grid)
            fd = (flow.X[:, 2:] - flow.X[:, :-2]) / (2 * grid.dx)
            fd_worst = max(fd_worst, float(np.max(np.abs(fd - flow.Xp[:, 1:-1]) / flow.Xp[:, 1:-1])))
            t = path.times[:, None]
            K = drift.lipschitz
            exhaustive &= bool(np.all(np.diff(flow.X, axis=1) > 0))
            exhaustive &= bool(np.all(flow.Xp >= np.exp(-K * t) * (1 - 1e-12)))
            exhaustive &= bool(np.all(flow.Xp <= np.exp(K * t) * (1 + 1e-12)))
    ok = e_zero <= 1e-10 and e_const <= 1e-10 and e_lin <= 1e-6 and fd_worst <= fd_tol and exhaustive
    verdict(4, "flow", ok, f"zero {e_zero:.1e}, constant {e_const:.1e} (<= 1e-10), linear {e_lin:.1e} "
                           f"(<= 1e-6), derivative vs differences {fd_worst:.1e} (<= {fd_tol:.0e}), "
                           f"monotone and bounded: {exhaustive}")


def test_c05_solution_formula(verdict):
    grid = SpatialGrid(10.0, 2001)
    p = sample_path(NoiseSpec("wiener", TimeGrid(1.0, 512), 5000))
    datum = bump_datum(0.5, 2.0)
    u = solve_transport(datum, bump_drift(0.8), p, grid)
    worst_char = 0.0
    for k in (128, 256, 512):
        i = slice(500, 1500, 7)
        worst_char = max(worst_char, float(np.max(np.abs(u(k, u.flow.X[k, i]) - datum(grid.nodes[i])))))
    v = solve_transport(datum, zero_drift(), p, grid)
    xs = np.linspace(-6, 6, 241)
    worst_shift = max(float(np.max(np.abs(v(k, xs) - datum(xs - p.values[k])))) for k in (100, 300, 512))
    lo, hi = float(np.min(datum(grid.nodes))), float(np.max(datum(grid.nodes)))
    in_range = all(np.all((u(k, xs) >= lo) & (u(k, xs) <= hi)) for k in range(0, 513, 32))
    ok = worst_char <= 1e-8 and worst_shift <= 1e-10 and in_range
    verdict(5, "solution formula", ok, f"characteristic constancy {worst_char:.1e} (<= 1e-8), "
                                       f"translation {worst_shift:.1e} (<= 1e-10), range preserved: {in_range}")


def test_c06_weak_formulation(verdict):
    cfg = ScenarioConfig.load(DEFAULT_CONFIG)
    datum, drift, grid = cfg.make_datum(), cfg.make_drift(), cfg.make_grid()
    phis = cfg.make_battery()
    scenario = TransportScenario(datum, drift, grid)
    rep = residual_study(scenario, RefinementLadder([256, 512, 1024, 2048], "wiener", 4000, 20), phis)
    median = rep.summary["median_ratio"]
    smooth = residual_study(scenario, RefinementLadder([64, 128, 256, 512], "deterministic",
                                                       path_fn=np.sin), phis)
    order = smooth.summary["estimated_order"]
    path = sample_path(NoiseSpec("wiener", TimeGrid(1.0, 2048), 4000))
    ks = time_indices(2048)
    factors = []
    sol = solve_transport(datum, drift, path, grid, audit=False)
    frozen = FrozenField(datum, drift, path, grid)
    for phi in phis:
        r_sol = max(abs(r.residual) for r in weak_residuals(sol, [phi], ks))
        r_frz = max(abs(r.residual) for r in weak_residuals(frozen, [phi], ks))
        factors.append(r_frz / r_sol if r_sol > 0 else math.inf)
    ok = median >= 1.2 and order >= 1.0 and max(factors) >= 10
    verdict(6, "weak formulation", ok, f"Wiener median ratio {median:.3f} (>= 1.2), smooth-path order "
                                       f"{order:.2f} (>= 1), best frozen-probe factor {max(factors):.1f} (>= 10)")


def test_c07_commutator(verdict):
    x = np.linspace(-6, 6, 2401)
    rng = np.random.default_rng(5000)
    ratios, monotone, const_sup = [], True, 0.0
    for _ in range(10):
        B, V = random_commutator_pair(rng)
        decay = commutator_decay(B, V, EPS, 0.5, x)
        ratios.extend(decay.ratios())
        monotone &= decay.non_increasing()
        for eps in EPS:
            const_sup = max(const_sup,
                            commutator(ShiftedField.constant(1.3), V, eps, 0.5, x).sup_norm(),
                            commutator(B, ShiftedField.constant(0.7), eps, 0.5, x).sup_norm())
    median = float(np.median(ratios))
    ok = const_sup <= 1e-9 and monotone and median >= 1.5
    verdict(7, "commutator decay", ok, f"constant cases {const_sup:.1e} (<= 1e-9), non-increasing: "
                                       f"{monotone}, median halving ratio {median:.2f} (>= 1.5)")


def test_c08_energy_gronwall(verdict):
    grid = SpatialGrid(10.0, 2001)
    p = sample_path(NoiseSpec("wiener", TimeGrid(1.0, 256), 6000))
    u = solve_transport(zero_datum(), sine_drift(0.6, 1.2), p, grid)
    energy, _ = uniqueness_pipeline(u, 2.0, time_indices(256))
    max_energy = max(abs(row.lhs) for row in energy.rows)
    rng = np.random.default_rng(6001)
    held = 0
    for i in range(10):
        drift = bump_drift(rng.uniform(0.2, 1.0), rng.uniform(-1, 1), rng.uniform(1.5, 3.0))
        datum = bump_datum(rng.uniform(-1, 1), rng.uniform(1.0, 2.5))
        path = sample_path(NoiseSpec("wiener", TimeGrid(1.0, 64), 6100 + i))
        v = solve_transport(datum, drift, path, grid, audit=False)
        r = rng.uniform(0.5, 2.5)
        rep = energy_identity_check(ShiftedField.from_solution(v, polish=False),
                                    ShiftedField.from_drift(drift, path), r, path.times,
                                    range(0, 65, 8), bound_constant=4.0)
        held += all(row.bound_ok for row in rep.rows)
    t = np.linspace(0, 1, 1025)
    gron = gronwall_bound(1.5 * np.exp(2.0 * t), t, 2.0, 1.5)
    ok = max_energy <= 1e-12 and held == 10 and gron.passed and gron.tightness >= 0.99
    verdict(8, "energy and Gronwall", ok, f"zero-datum energy {max_energy:.1e} (<= 1e-12), tail bound "
                                          f"{held}/10, extremal Gronwall tightness {gron.tightness:.4f}")


def _z_worst(rep):
    dev = np.abs(rep.empirical - rep.theoretical)
    se = rep.standard_error
    exact = se == 0
    if np.any(dev[exact] != 0):
        return math.inf
    return float(np.max(dev[~exact] / se[~exact]))


def test_c09_noise_covariance(verdict):
    worst = {}
    for kind, hurst in (("wiener", None), ("fbm", 0.55), ("fbm", 0.75), ("fbm", 0.9), ("subfbm", 0.75)):
        rep = empirical_covariance(draw_paths(kind, 16, 10_000, hurst, base_seed=9000))
        worst[f"{kind}{'' if hurst is None else f' H={hurst}'}"] = _z_worst(rep)
    times = TimeGrid(1.0, 16).nodes
    reduce_ok = True
    for kind in ("fbm", "subfbm"):
        reduce_ok &= bool(np.allclose(theoretical_covariance(kind, times, 0.5),
                                      theoretical_covariance("wiener", times), rtol=0, atol=1e-15))
        rep = empirical_covariance(draw_paths(kind, 16, 10_000, 0.5, base_seed=9000), kind="wiener")
        worst[f"{kind} H=0.5 vs Wiener"] = _z_worst(rep)
    ok = max(worst.values()) <= 5.0 and reduce_ok
    detail = ", ".join(f"{k} {v:.2f}" for k, v in worst.items())
    verdict(9, "noise covariance", ok, f"max |z| per family: {detail} (<= 5); H=0.5 kernels equal min: {reduce_ok}")


def test_c10_determinism(verdict, tmp_path):
    cfg = ScenarioConfig.load(DEFAULT_CONFIG)
    a = run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    ok = not mismatch and not errors and len(match) == len(names)
    verdict(10, "determinism", ok, f"{len(match)}/{len(names)} files byte-identical; "
                                   f"default scenario gates {'all pass' if a.passed else a.failed_gates}")
