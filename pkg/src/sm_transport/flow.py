"""Characteristic flow ``X_t(x) = x + int_0^t b(r, X_r(x)) dr + mu_t``.

The rough additive term is removed by ``Y_t = X_t - mu_t``, which solves the
classical ODE ``Y' = b(t, Y + mu_t)``, ``Y_0 = x``.  One classical RK4 step is
taken per path interval with ``mu`` interpolated linearly, so the numerical
flow is (up to RK4 error) the exact flow driven by the piecewise-linear path.

Alongside the state the solver propagates the exact derivative of the
discrete RK4 map with respect to ``x``.  Inversion uses it; the
exponential formula ``X'_t = exp(int_0^t b_x(s, X_s) ds)`` is stored separately
in :attr:`FlowField.Xp`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, FlowRangeError, FlowSolverError, PreconditionError
from .noise import NoisePath, TimeGrid
from .quadrature import BUMP_PRIME_MAX, bump, bump_prime, simpson_nodes, trapezoid_cumulative
from .report import dump_json


@dataclass(frozen=True)
class DriftField:
    """Drift ``b(t, x)`` with ``b_x`` and a bound ``K >= sup |b_x|``."""

    b: Callable
    b_x: Callable
    lipschitz: float
    label: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return np.asarray(self.b(t, x), dtype=float) * np.ones_like(x)

    def dx(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        return np.asarray(self.b_x(t, x), dtype=float) * np.ones_like(x)

    def check(self, t_probe=None, x_probe=None, rtol: float = 1e-4) -> None:
        """Audit ``|b_x| <= K`` and finite-difference consistency at probes."""
        t = np.linspace(0.0, 1.0, 5) if t_probe is None else np.asarray(t_probe, dtype=float)
        x = np.linspace(-5.0, 5.0, 41) if x_probe is None else np.asarray(x_probe, dtype=float)
        t, x = np.meshgrid(t, x)
        bx = self.dx(t, x)
        if not np.all(np.isfinite(bx)) or not np.all(np.isfinite(self(t, x))):
            raise PreconditionError(f"drift {self.label!r} is not finite at the probes")
        if np.max(np.abs(bx)) > self.lipschitz * (1 + 1e-12):
            raise PreconditionError(
                f"drift {self.label!r}: |b_x| reaches {np.max(np.abs(bx)):.4g} > K={self.lipschitz}"
            )
        h = 1e-5
        approx = (self(t, x + h) - self(t, x - h)) / (2 * h)
        err = np.abs(approx - bx) / np.maximum(1.0, np.abs(bx))
        if err.max() > rtol:
            raise PreconditionError(f"drift {self.label!r}: b_x inconsistent with b ({err.max():.2e})")


def zero_drift() -> DriftField:
    return DriftField(lambda t, x: 0.0 * x, lambda t, x: 0.0 * x, 0.0, "zero")


def constant_drift(c: float) -> DriftField:
    return DriftField(lambda t, x: c + 0.0 * x, lambda t, x: 0.0 * x, 0.0, "constant", {"c": c})


def linear_drift(a: float) -> DriftField:
    return DriftField(lambda t, x: a * x, lambda t, x: a + 0.0 * x, abs(a), "linear", {"a": a})


def bump_drift(amplitude: float = 0.5, center: float = 0.0, width: float = 3.0) -> DriftField:
    """Compactly supported drift ``A * bump((x - c) / w)``."""

    def b(t, x):
        return amplitude * bump((x - center) / width)

    def b_x(t, x):
        return amplitude / width * bump_prime((x - center) / width)

    bound = abs(amplitude) / width * BUMP_PRIME_MAX * 1.001
    params = {"amplitude": amplitude, "center": center, "width": width}
    return DriftField(b, b_x, bound, "bump", params)


def sine_drift(amplitude: float = 0.5, frequency: float = 1.0, rate: float = 1.0) -> DriftField:
    """Time-dependent ``A sin(w x) cos(rate t)``; smooth, not tail-integrable."""

    def b(t, x):
        return amplitude * np.sin(frequency * x) * np.cos(rate * t)

    def b_x(t, x):
        return amplitude * frequency * np.cos(frequency * x) * np.cos(rate * t)

    params = {"amplitude": amplitude, "frequency": frequency, "rate": rate}
    return DriftField(b, b_x, abs(amplitude * frequency), "sine", params)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform nodes on ``[-L, L]``."""

    half_width: float = 10.0
    n_points: int = 2001

    def __post_init__(self):
        if self.half_width <= 0:
            raise ConfigurationError(f"half_width must be positive, got {self.half_width}")
        if self.n_points < 3:
            raise ConfigurationError(f"need at least 3 spatial points, got {self.n_points}")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n_points)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)


@dataclass(frozen=True, eq=False)
class FlowField:
    """Tabulated flow on ``path.times x grid.nodes``.

    ``X[k, i] ~ X_{t_k}(x_i)``; ``Xp`` holds the exponential-formula
    derivative; ``dX`` the derivative of the discrete RK4 map.
    """

    drift: DriftField
    path: NoisePath
    grid: SpatialGrid
    X: np.ndarray
    dX: np.ndarray
    Xp: np.ndarray | None = None

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    def max_displacement(self) -> float:
        return float(np.max(np.abs(self.X - self.x[None, :])))

    def to_csv(self, path, x_stride: int = 1, t_stride: int = 1) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x0", "X", "Xp"])
            xp = self.Xp if self.Xp is not None else np.full_like(self.X, np.nan)
            for k in range(0, self.X.shape[0], t_stride):
                t = repr(float(self.times[k]))
                for i in range(0, self.X.shape[1], x_stride):
                    writer.writerow([t, repr(float(self.x[i])), repr(float(self.X[k, i])),
                                     repr(float(xp[k, i]))])


def integrate_characteristics(drift: DriftField, path: NoisePath, x0, k_start: int = 0,
                              k_end: int | None = None):
    """RK4 characteristics from ``X_{t_{k_start}} = x0`` to ``t_{k_end}``.

    Returns ``(X, dX)`` of shape ``(k_end - k_start + 1,) + x0.shape`` where
    ``dX`` is the derivative of the discrete map with respect to ``x0``.
    """
    k_end = path.grid.n_steps if k_end is None else k_end
    t, m = path.times, path.values
    x0 = np.asarray(x0, dtype=float)
    n = k_end - k_start
    X = np.empty((n + 1,) + x0.shape)
    dX = np.empty_like(X)
    y = x0 - m[k_start]
    d = np.ones_like(y)
    X[0], dX[0] = x0, d
    b, bx = drift.b, drift.b_x
    for j in range(n):
        k = k_start + j
        t0, t1 = t[k], t[k + 1]
        h = t1 - t0
        th = t0 + 0.5 * h
        m0, m1 = m[k], m[k + 1]
        mm = 0.5 * (m0 + m1)
        z1 = y + m0
        k1 = b(t0, z1)
        d1 = bx(t0, z1) * d
        z2 = y + 0.5 * h * k1 + mm
        k2 = b(th, z2)
        d2 = bx(th, z2) * (d + 0.5 * h * d1)
        z3 = y + 0.5 * h * k2 + mm
        k3 = b(th, z3)
        d3 = bx(th, z3) * (d + 0.5 * h * d2)
        z4 = y + h * k3 + m1
        k4 = b(t1, z4)
        d4 = bx(t1, z4) * (d + h * d3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        d = d + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
        X[j + 1] = y + m1
        dX[j + 1] = d
        if not (np.all(np.isfinite(X[j + 1])) and np.all(np.isfinite(d))):
            bad = np.argwhere(~np.isfinite(np.atleast_1d(X[j + 1])))
            i = int(bad[0][0]) if bad.size else -1
            raise FlowSolverError(f"non-finite characteristic state at (k={k + 1}, i={i})")
    return X, dX


def solve_flow(drift: DriftField, path: NoisePath, grid: SpatialGrid = SpatialGrid()) -> FlowField:
    """Tabulate the flow from every node of ``grid`` and attach ``Xp``."""
    X, dX = integrate_characteristics(drift, path, grid.nodes)
    X.setflags(write=False)
    dX.setflags(write=False)
    return flow_derivative(drift, FlowField(drift, path, grid, X, dX))


def flow_derivative(drift: DriftField, flow: FlowField) -> FlowField:
    """``Xp = exp(int_0^t b_x(s, X_s) ds)`` by the trapezoid rule along each trajectory."""
    bx = drift.dx(flow.times[:, None], flow.X)
    Xp = np.exp(trapezoid_cumulative(bx, flow.path.grid.dt))
    Xp.setflags(write=False)
    return replace(flow, Xp=Xp)


def _hermite_solve(col, dcol, x, dxs, y, i, iters: int = 30):
    """Solve ``p(s) = y`` on the cubic Hermite piece over ``[x_i, x_{i+1}]``."""
    y0, y1 = col[i], col[i + 1]
    m0, m1 = dcol[i] * dxs, dcol[i + 1] * dxs
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    span = y1 - y0
    s = np.clip((y - y0) / np.where(span > 0, span, 1.0), 0.0, 1.0)
    for _ in range(iters):
        s2, s3 = s * s, s * s * s
        p = (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * m1
        dp = (6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * m0 + (-6 * s2 + 6 * s) * y1 + (3 * s2 - 2 * s) * m1
        r = p - y
        lo = np.where(r < 0, s, lo)
        hi = np.where(r > 0, s, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = s - r / dp
        bad = ~np.isfinite(step) | (step < lo) | (step > hi)
        s_new = np.where(r == 0, s, np.where(bad, 0.5 * (lo + hi), step))
        if np.all((np.abs(s_new - s) <= 1e-11) | (np.abs(r) <= 1e-14 * (1.0 + np.abs(y)))):
            s = s_new
            break
        s = s_new
    return x[i] + s * dxs


def invert_flow(flow: FlowField, k: int, y, polish: bool = True, tol: float = 1e-10):
    """``X_{t_k}^{-1}(y)`` for scalar or array ``y``.

    The tabulated column brackets ``y``; Newton on the cubic Hermite
    interpolant (values and discrete-map derivatives) gives a first estimate.
    With ``polish`` the estimate is corrected by Newton steps on fresh RK4
    solves until ``|X_{t_k}(x) - y| <= tol * (1 + |y|)``.
    """
    scalar = np.ndim(y) == 0
    y = np.atleast_1d(np.asarray(y, dtype=float))
    col, dcol, x = flow.X[k], flow.dX[k], flow.x
    if np.any(y < col[0]) or np.any(y > col[-1]):
        bad = y[(y < col[0]) | (y > col[-1])][0]
        raise FlowRangeError(
            f"y={bad!r} outside the image [{col[0]:.6g}, {col[-1]:.6g}] of the domain at k={k}; "
            "widen the spatial half-width"
        )
    if k == 0:
        out = y.copy()
    else:
        i = np.clip(np.searchsorted(col, y, side="right") - 1, 0, col.size - 2)
        out = _hermite_solve(col, dcol, x, flow.grid.dx, y, i)
        if polish:
            out = _polish(flow, k, y, out, tol)
    return float(out[0]) if scalar else out


def _polish(flow: FlowField, k: int, y, x, tol: float, max_iter: int = 4):
    for _ in range(max_iter):
        X, dX = integrate_characteristics(flow.drift, flow.path, x, 0, k)
        r = X[-1] - y
        if np.all(np.abs(r) <= 0.1 * tol * (1.0 + np.abs(y))):
            break
        x = x - r / dX[-1]
    return x


def evaluate_flow(flow: FlowField, k: int, x0):
    """``X_{t_k}(x0)`` by a fresh RK4 solve."""
    X, _ = integrate_characteristics(flow.drift, flow.path, np.asarray(x0, dtype=float), 0, k)
    return X[-1]


@dataclass
class TailAudit:
    r_values: list[float]
    values: list[float]
    decays: bool
    label: str = ""

    def to_dict(self):
        return {"drift": self.label, "r": self.r_values, "sup_tail_integral": self.values,
                "decays": self.decays}

    def to_json(self, path) -> None:
        dump_json(self.to_dict(), path)


def audit_tail_condition(drift: DriftField, r_values: Sequence[float], grid: TimeGrid,
                         n_panels: int = 2000) -> TailAudit:
    """``sup_t int_{r <= |x| <= 10 r} |b(t, x)| / (1 + |x|) dx`` for each ``r``.

    Decay means every value is below its predecessor (or zero) and the last is
    at most a tenth of the first.
    """
    t = grid.nodes[:, None]
    values = []
    for r in r_values:
        x, w = simpson_nodes(r, 10.0 * r, n_panels)
        weight = w / (1.0 + x)
        right = np.abs(drift(t, x[None, :])) @ weight
        left = np.abs(drift(t, -x[None, :])) @ weight
        values.append(float(np.max(right + left)))
    steps_ok = all(b < a or b == 0.0 for a, b in zip(values[:-1], values[1:]))
    decays = bool(steps_ok and values[-1] <= 0.1 * values[0])
    return TailAudit([float(r) for r in r_values], values, decays, drift.label)
