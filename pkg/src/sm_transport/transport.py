"""Weak solution ``u(t, x) = u0(X_t^{-1}(x))`` and its weak-form residual.

For a test function ``phi`` with compact support the weak formulation reads

    int u(t,x) phi dx = int u0 phi dx
                        + int_0^t int u (b phi' + b_x phi) dx ds
                        + int_0^t int u phi' dx o dmu(s)

The last term is a symmetric integral of the time function
``xi_s = int u(s,x) phi'(x) dx`` and is evaluated with
:func:`~sm_transport.symint.symmetric_sum`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .flow import DriftField, FlowField, SpatialGrid, integrate_characteristics, invert_flow, solve_flow
from .noise import NoisePath
from .quadrature import bump, bump_prime, simpson_nodes
from .report import ConvergenceReport
from .symint import RefinementLadder, symmetric_sum


@dataclass(frozen=True)
class InitialDatum:
    u0: Callable
    u0_x: Callable
    bound: float | None = None
    label: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.u0(x), dtype=float) * np.ones_like(x)

    def dx(self, x):
        x = np.asarray(x, dtype=float)
        return np.asarray(self.u0_x(x), dtype=float) * np.ones_like(x)

    def check(self, x_probe=None, rtol: float = 1e-4) -> None:
        x = np.linspace(-6.0, 6.0, 241) if x_probe is None else np.asarray(x_probe, dtype=float)
        h = 1e-5
        approx = (self(x + h) - self(x - h)) / (2 * h)
        err = np.abs(approx - self.dx(x)) / np.maximum(1.0, np.abs(self.dx(x)))
        if err.max() > rtol:
            raise PreconditionError(f"initial datum {self.label!r}: u0_x inconsistent ({err.max():.2e})")
        if self.bound is not None and np.max(np.abs(self(x))) > self.bound:
            raise PreconditionError(f"initial datum {self.label!r} exceeds its bound {self.bound}")


def zero_datum() -> InitialDatum:
    return InitialDatum(lambda x: 0.0 * x, lambda x: 0.0 * x, 0.0, "zero")


def bump_datum(center: float = 0.0, width: float = 1.5, height: float = 1.0) -> InitialDatum:
    return InitialDatum(
        lambda x: height * bump((x - center) / width),
        lambda x: height / width * bump_prime((x - center) / width),
        abs(height) * math.exp(-1.0),
        "bump",
        {"center": center, "width": width, "height": height},
    )


def smoothed_step(width: float = 0.5, height: float = 1.0) -> InitialDatum:
    """``height * (1 + tanh(x / width)) / 2``."""
    return InitialDatum(
        lambda x: 0.5 * height * (1.0 + np.tanh(x / width)),
        lambda x: 0.5 * height / width / np.cosh(x / width) ** 2,
        abs(height),
        "step",
        {"width": width, "height": height},
    )


@dataclass(frozen=True)
class TestBump:
    """``phi(x) = exp(-1 / (1 - z^2))``, ``z = (x - c) / w``, supported on ``[c-w, c+w]``."""

    __test__ = False  # not a pytest class

    center: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ConfigurationError(f"bump width must be positive, got {self.width}")

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.width, self.center + self.width

    def __call__(self, x):
        return bump((np.asarray(x, dtype=float) - self.center) / self.width)

    def prime(self, x):
        return bump_prime((np.asarray(x, dtype=float) - self.center) / self.width) / self.width

    def quadrature(self, n_panels: int = 256):
        return simpson_nodes(*self.support, n_panels)


def default_battery() -> list[TestBump]:
    return [TestBump(-2.0, 0.5), TestBump(0.0, 1.0), TestBump(1.5, 2.0)]


def invert_table(flow: FlowField, ks: Sequence[int], y) -> np.ndarray:
    """Batch inversion from the tabulated columns only (no fresh solves).

    ``y`` has shape ``(len(ks), q)``.  Uses cubic Hermite interpolation of
    each column with the discrete-map derivative, accurate to roughly
    ``dx**4`` on smooth flows.
    """
    ks = np.asarray(ks, dtype=int)
    y = np.asarray(y, dtype=float)
    cols, dcols = flow.X[ks], flow.dX[ks]
    if np.any(y < cols[:, :1]) or np.any(y > cols[:, -1:]):
        # fall back to the scalar path for its range error message
        for row, k in enumerate(ks):
            invert_flow(flow, int(k), y[row], polish=False)
    i = np.empty(y.shape, dtype=int)
    for row in range(ks.size):
        i[row] = np.searchsorted(cols[row], y[row], side="right") - 1
    i = np.clip(i, 0, cols.shape[1] - 2)
    r = np.arange(ks.size)[:, None]
    y0, y1 = cols[r, i], cols[r, i + 1]
    dxs = flow.grid.dx
    m0, m1 = dcols[r, i] * dxs, dcols[r, i + 1] * dxs
    lo, hi = np.zeros_like(y), np.ones_like(y)
    s = np.clip((y - y0) / (y1 - y0), 0.0, 1.0)
    for _ in range(40):
        s2, s3 = s * s, s * s * s
        p = (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (3 * s2 - 2 * s3) * y1 + (s3 - s2) * m1
        dp = (6 * s2 - 6 * s) * (y0 - y1) + (3 * s2 - 4 * s + 1) * m0 + (3 * s2 - 2 * s) * m1
        res = p - y
        lo = np.where(res < 0, s, lo)
        hi = np.where(res > 0, s, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = s - res / dp
        bad = ~np.isfinite(step) | (step < lo) | (step > hi)
        s_new = np.where(res == 0, s, np.where(bad, 0.5 * (lo + hi), step))
        done = np.all((np.abs(s_new - s) <= 1e-11) | (np.abs(res) <= 1e-14 * (1.0 + np.abs(y))))
        s = s_new
        if done:
            break
    out = flow.x[i] + s * dxs
    out[ks == 0] = y[ks == 0]
    return out


class SolutionField:
    """``u(t_k, x) = u0(X_{t_k}^{-1}(x))`` evaluated through the flow inverse."""

    def __init__(self, flow: FlowField, datum: InitialDatum):
        self.flow = flow
        self.datum = datum

    @property
    def drift(self) -> DriftField:
        return self.flow.drift

    @property
    def path(self) -> NoisePath:
        return self.flow.path

    @property
    def grid(self) -> SpatialGrid:
        return self.flow.grid

    def margin(self) -> float:
        return self.flow.max_displacement()

    def preimage(self, k: int, x, polish: bool = True):
        return invert_flow(self.flow, k, x, polish=polish)

    def __call__(self, k: int, x, polish: bool = True):
        return self.datum(self.preimage(k, x, polish))

    def table(self, ks, x) -> np.ndarray:
        """``u`` on ``ks x x`` from the tabulated flow (no polishing)."""
        x = np.asarray(x, dtype=float)
        y = np.broadcast_to(x, (len(ks), x.size))
        return self.datum(invert_table(self.flow, ks, y))

    def dx(self, k: int, x):
        """``u_x = u0'(x0) / X'_{t_k}(x0)`` at the preimage ``x0``."""
        x0 = np.atleast_1d(self.preimage(k, x))
        _, dX = integrate_characteristics(self.drift, self.path, x0, 0, k)
        out = self.datum.dx(x0) / dX[-1]
        return float(out[0]) if np.ndim(x) == 0 else out


class FrozenField:
    """``u(t, x) = u0(x)`` for all ``t``: a non-solution probe for the weak form."""

    def __init__(self, datum: InitialDatum, drift: DriftField, path: NoisePath, grid: SpatialGrid):
        self.datum = datum
        self.drift = drift
        self.path = path
        self.grid = grid

    def margin(self) -> float:
        return 0.0

    def __call__(self, k: int, x, polish: bool = True):
        return self.datum(x)

    def table(self, ks, x) -> np.ndarray:
        return np.broadcast_to(self.datum(x), (len(ks), np.size(x))).copy()


def solve_transport(datum: InitialDatum, drift: DriftField, path: NoisePath,
                    grid: SpatialGrid = SpatialGrid(), audit: bool = True) -> SolutionField:
    if audit:
        datum.check()
        drift.check(t_probe=np.linspace(0.0, path.grid.horizon, 5))
    return SolutionField(solve_flow(drift, path, grid), datum)


@dataclass
class WeakResidualRow:
    level: int
    seed: int
    phi_center: float
    phi_width: float
    t: float
    lhs: float
    rhs_initial: float
    rhs_drift: float
    rhs_noise: float
    residual: float

    COLUMNS = ("level", "seed", "phi_center", "phi_width", "t", "lhs", "rhs_initial",
               "rhs_drift", "rhs_noise", "residual")


def _check_margin(u, phi: TestBump) -> None:
    half = u.grid.half_width
    margin = u.margin()
    a, b = phi.support
    if a <= -half + margin or b >= half - margin:
        raise ConfigurationError(
            f"test function support [{a}, {b}] is not inside (-L + m, L - m) with L={half}, "
            f"margin m={margin:.3g}"
        )


def _weak_series(u, phi: TestBump, k_max: int, n_panels: int):
    """Time series on nodes 0..k_max: ``int u phi``, drift integrand, ``int u phi'``."""
    x, w = phi.quadrature(n_panels)
    ks = np.arange(k_max + 1)
    uu = u.table(ks, x)
    t = u.path.times[: k_max + 1, None]
    drift_kernel = u.drift(t, x[None, :]) * phi.prime(x) + u.drift.dx(t, x[None, :]) * phi(x)
    mass = uu @ (w * phi(x))
    drift_series = (uu * drift_kernel) @ w
    noise_series = uu @ (w * phi.prime(x))
    initial = float(u.datum(x) @ (w * phi(x)))
    return initial, mass, drift_series, noise_series


def _row_from_series(u, phi, k, series, level, seed) -> WeakResidualRow:
    initial, mass, drift_series, noise_series = series
    dt = u.path.grid.dt
    if k == 0:
        rhs_drift = rhs_noise = 0.0
    else:
        d = drift_series[: k + 1]
        rhs_drift = dt * (math.fsum(d) - 0.5 * (d[0] + d[-1]))
        rhs_noise = symmetric_sum(noise_series[: k + 1], u.path.truncate(k))
    lhs = float(mass[k])
    residual = lhs - (initial + rhs_drift + rhs_noise)
    return WeakResidualRow(level, seed, phi.center, phi.width, float(u.path.times[k]), lhs,
                           initial, rhs_drift, rhs_noise, residual)


def weak_residual(u, phi: TestBump, t_index: int, n_panels: int = 256,
                  level: int = 0, seed: int = 0) -> WeakResidualRow:
    """One row of the weak-form residual for field ``u`` at ``t_{t_index}``."""
    _check_margin(u, phi)
    series = _weak_series(u, phi, t_index, n_panels)
    return _row_from_series(u, phi, t_index, series, level, seed)


def weak_residuals(u, phis: Sequence[TestBump], t_indices: Sequence[int], n_panels: int = 256,
                   level: int = 0, seed: int = 0) -> list[WeakResidualRow]:
    """All rows for a battery, sharing one time series per test function."""
    rows = []
    k_max = max(t_indices)
    for phi in phis:
        _check_margin(u, phi)
        series = _weak_series(u, phi, k_max, n_panels)
        rows.extend(_row_from_series(u, phi, k, series, level, seed) for k in t_indices)
    return rows


@dataclass(frozen=True)
class TransportScenario:
    datum: InitialDatum
    drift: DriftField
    grid: SpatialGrid = SpatialGrid()
    frozen: bool = False

    def field_for(self, path: NoisePath):
        if self.frozen:
            return FrozenField(self.datum, self.drift, path, self.grid)
        return solve_transport(self.datum, self.drift, path, self.grid, audit=False)


DEFAULT_TIME_FRACTIONS = (0.25, 0.5, 0.75, 1.0)


def time_indices(n_steps: int, fractions: Sequence[float] = DEFAULT_TIME_FRACTIONS) -> list[int]:
    out = []
    for f in fractions:
        k = f * n_steps
        if abs(k - round(k)) > 1e-9:
            raise ConfigurationError(f"time fraction {f} is not a node of the {n_steps}-step grid")
        out.append(int(round(k)))
    return out


def residual_study(scenario: TransportScenario, ladder: RefinementLadder,
                   phis: Sequence[TestBump] | None = None,
                   fractions: Sequence[float] = DEFAULT_TIME_FRACTIONS,
                   n_panels: int = 256) -> ConvergenceReport:
    """Max weak-form residual over ``(phi, t)`` per level and seed.

    Per-row detail is kept in ``report.details`` (``WeakResidualRow`` list).
    """
    phis = default_battery() if phis is None else list(phis)
    report = ConvergenceReport(
        "weak_residual",
        ["level", "n_steps", "seed", "max_abs_residual"],
        metric="max_abs_residual",
        config={"levels": list(ladder.levels), "kind": ladder.kind.value, "hurst": ladder.hurst,
                "drift": scenario.drift.label, "datum": scenario.datum.label,
                "frozen": scenario.frozen, "fractions": list(fractions),
                "phis": [[p.center, p.width] for p in phis]},
    )
    for seed in ladder.seeds:
        for level, path in enumerate(ladder.paths(seed)):
            u = scenario.field_for(path)
            rows = weak_residuals(u, phis, time_indices(path.grid.n_steps, fractions), n_panels,
                                  level, seed)
            report.details.extend(rows)
            report.add(level=level, n_steps=path.grid.n_steps, seed=seed,
                       max_abs_residual=max(abs(r.residual) for r in rows))
    report.summarize()
    return report


def write_residual_csv(rows: Sequence[WeakResidualRow], path) -> None:
    rows = sorted(rows, key=lambda r: (r.level, r.seed, r.phi_center, r.phi_width, r.t))
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WeakResidualRow.COLUMNS)
        for r in rows:
            d = asdict(r)
            writer.writerow([repr(float(d[c])) if isinstance(d[c], float) else d[c]
                             for c in WeakResidualRow.COLUMNS])
