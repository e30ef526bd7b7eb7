"""Symmetric (Stratonovich-type) integrals against a noise path.

The integral of ``xi`` against ``mu`` is the limit of midpoint-weighted sums

    sum_k (xi_{k-1} + xi_k) / 2 * (mu_k - mu_{k-1})

over partitions with vanishing mesh.  :func:`symmetric_sum` evaluates one such
sum on the path's own grid; the limit is probed by nested refinement of a
single path (:func:`chain_rule_study`).  For integrands ``f(mu_t, t)`` the
limit is known in closed form through the antiderivative
``F(z, v) = int_0^z f(y, v) dy`` and is evaluated by :func:`chain_rule_rhs`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainTruncationWarning, PreconditionError
from .noise import NoiseKind, NoisePath, NoiseSpec, TimeGrid, deterministic_path, sample_path
from .quadrature import simpson_nodes, simpson_weights
from .report import ConvergenceReport

FD_STEP = 1e-5
FD_RTOL = 1e-4


def _fd_mismatch(exact, fwd, bwd, step):
    approx = (fwd - bwd) / (2.0 * step)
    return np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))


@dataclass(frozen=True)
class Integrand:
    """``f(y, t)`` with its partial derivatives; all callables vectorized."""

    f: Callable
    f_y: Callable
    f_t: Callable
    label: str = ""

    def __call__(self, y, t):
        y, t = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(t, dtype=float))
        return np.asarray(self.f(y, t), dtype=float) * np.ones_like(y)

    def check(self, y_probe=None, t_probe=None, rtol: float = FD_RTOL) -> None:
        """Finite-difference consistency of ``f_y`` and ``f_t`` at probe points."""
        y = np.linspace(-2.0, 2.0, 9) if y_probe is None else np.asarray(y_probe, dtype=float)
        t = np.linspace(0.1, 0.9, 5) if t_probe is None else np.asarray(t_probe, dtype=float)
        y, t = np.meshgrid(y, t)
        h = FD_STEP
        vals = [self(y, t), self.f_y(y, t) * np.ones_like(y), self.f_t(y, t) * np.ones_like(y)]
        if not all(np.all(np.isfinite(v)) for v in vals):
            raise PreconditionError(f"integrand {self.label!r} is not finite at the probes")
        ey = _fd_mismatch(vals[1], self(y + h, t), self(y - h, t), h)
        et = _fd_mismatch(vals[2], self(y, t + h), self(y, t - h), h)
        if ey.max() > rtol or et.max() > rtol:
            raise PreconditionError(
                f"integrand {self.label!r}: derivative mismatch "
                f"(f_y {ey.max():.2e}, f_t {et.max():.2e})"
            )


@dataclass(frozen=True)
class ParamIntegrand:
    """``f(y, t, x)`` with optional dominating bounds ``g, g1, g2`` in ``x``."""

    f: Callable
    f_y: Callable | None = None
    f_t: Callable | None = None
    g: Callable | None = None
    g1: Callable | None = None
    g2: Callable | None = None
    label: str = ""

    def __call__(self, y, t, x):
        y, t, x = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (y, t, x)))
        return np.asarray(self.f(y, t, x), dtype=float) * np.ones_like(y)

    def check_bounds(self, y_probe, t_probe, x_probe) -> None:
        y, t, x = np.meshgrid(y_probe, t_probe, x_probe, indexing="ij")
        pairs = [(self.f, self.g, "g"), (self.f_y, self.g1, "g1"), (self.f_t, self.g2, "g2")]
        for fn, bound, name in pairs:
            if fn is None or bound is None:
                continue
            excess = np.abs(fn(y, t, x)) - np.asarray(bound(x), dtype=float)
            if np.any(excess > 1e-12):
                raise PreconditionError(f"{self.label!r} exceeds dominating bound {name}")


@dataclass(frozen=True)
class XQuadrature:
    """Composite Simpson on the truncated line ``[-L, L]``."""

    half_width: float = 10.0
    n_panels: int = 2000

    def nodes(self):
        return simpson_nodes(-self.half_width, self.half_width, self.n_panels)


@dataclass(frozen=True)
class RefinementLadder:
    """Nested grids ``levels[0] < levels[1] < ...`` each double the last.

    Sample ``i`` uses seed ``base_seed + i``.  Random paths are drawn on the
    finest level and subsampled, so every level sees the same realization.
    ``path_fn`` replaces sampling by a deterministic path ``g(t)``.
    """

    levels: Sequence[int]
    kind: NoiseKind = NoiseKind.WIENER
    base_seed: int = 0
    n_seeds: int = 1
    hurst: float | None = None
    horizon: float = 1.0
    path_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if len(levels) < 3:
            raise ConfigurationError(f"a refinement ladder needs at least 3 levels, got {len(levels)}")
        if levels[0] < 1 or any(b != 2 * a for a, b in zip(levels[:-1], levels[1:])):
            raise ConfigurationError(f"ladder levels must double strictly, got {levels}")
        if self.kind is NoiseKind.DETERMINISTIC and self.path_fn is None:
            raise ConfigurationError("deterministic ladder needs path_fn")
        if self.n_seeds < 1:
            raise ConfigurationError("n_seeds must be >= 1")

    @property
    def seeds(self) -> list[int]:
        if self.kind is NoiseKind.DETERMINISTIC:
            return [0]
        return [self.base_seed + i for i in range(self.n_seeds)]

    def finest_path(self, seed: int) -> NoisePath:
        grid = TimeGrid(self.horizon, self.levels[-1])
        if self.kind is NoiseKind.DETERMINISTIC:
            return deterministic_path(self.path_fn, grid)
        return sample_path(NoiseSpec(self.kind, grid, seed, self.hurst))

    def paths(self, seed: int) -> list[NoisePath]:
        fine = self.finest_path(seed)
        return [fine.coarsen(n) for n in self.levels]


# ---------------------------------------------------------------------------
# partition sums
# ---------------------------------------------------------------------------

def symmetric_sum(xi, mu: NoisePath) -> float:
    """Midpoint-weighted partition sum of ``xi`` against ``mu``.

    The sum is expanded into the four products ``xi_a * mu_b`` and accumulated
    with :func:`math.fsum`.  Pairs that cancel algebraically then cancel
    exactly, so ``xi = 1`` returns ``mu_T`` and ``xi = mu`` returns
    ``mu_T**2 / 2`` to the last bit.
    """
    xi = np.asarray(xi, dtype=float)
    m = mu.values
    if xi.shape != m.shape:
        raise PreconditionError(f"integrand has shape {xi.shape}, path has {m.shape}")
    if not np.all(np.isfinite(xi)):
        raise PreconditionError("integrand contains non-finite values")
    a, b = xi[:-1], xi[1:]
    ma, mb = m[:-1], m[1:]
    terms = np.concatenate((a * mb, -(a * ma), b * mb, -(b * ma)))
    return 0.5 * math.fsum(terms)


def _panels_for(zmax: float) -> int:
    n = max(64, int(math.ceil(128.0 * zmax)))
    return n + (n % 2)


def antiderivative(f, z, v):
    """``F(z, v) = int_0^z f(y, v) dy`` by composite Simpson.

    Uses ``F(z, v) = z * int_0^1 f(z s, v) ds`` so negative ``z`` are signed
    automatically.  ``z`` and ``v`` broadcast; the panel count (at least 64)
    keeps the step in ``y`` at or below 1/128.
    """
    z, v = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(v, dtype=float))
    zmax = float(np.max(np.abs(z))) if z.size else 0.0
    n = _panels_for(zmax)
    s = np.linspace(0.0, 1.0, n + 1)
    w = simpson_weights(n, 1.0 / n)
    y = z[..., None] * s
    vals = np.asarray(f(y, v[..., None]), dtype=float) * np.ones_like(y)
    if not np.all(np.isfinite(vals)):
        raise PreconditionError("non-finite integrand value in antiderivative")
    out = z * (vals @ w)
    return float(out) if out.ndim == 0 else out


def chain_rule_rhs(f: Integrand, mu: NoisePath) -> float:
    """``F(mu_T, T) - int_0^T dF/dt(mu_t, t) dt`` with trapezoid in time."""
    t = mu.times
    big_f = antiderivative(f.f, mu.terminal, t[-1])
    dfdt = antiderivative(f.f_t, mu.values, t)
    h = mu.grid.dt
    time_integral = h * (math.fsum(dfdt) - 0.5 * (dfdt[0] + dfdt[-1]))
    return big_f - time_integral


def chain_rule_study(f: Integrand, ladder: RefinementLadder, threshold: float = 1e-2) -> ConvergenceReport:
    """Symmetric sums on each ladder level against the closed form on the finest.

    Summary fields: ``median_ratio`` (consecutive error ratios pooled over
    seeds) and ``quantile_pass_fraction`` (seeds whose finest-level error is
    at most ``threshold``).
    """
    report = ConvergenceReport(
        "chain_rule",
        ["level", "n_steps", "seed", "lhs", "rhs", "abs_error"],
        config={"integrand": f.label, "levels": list(ladder.levels), "kind": ladder.kind.value,
                "hurst": ladder.hurst, "base_seed": ladder.base_seed, "n_seeds": ladder.n_seeds},
    )
    for seed in ladder.seeds:
        paths = ladder.paths(seed)
        rhs = chain_rule_rhs(f, paths[-1])
        for level, path in enumerate(paths):
            lhs = symmetric_sum(f(path.values, path.times), path)
            report.add(level=level, n_steps=path.grid.n_steps, seed=seed, lhs=lhs, rhs=rhs,
                       abs_error=abs(lhs - rhs))
    report.summarize(threshold)
    return report


def fubini_check(f: ParamIntegrand, mu: NoisePath, x_quad: XQuadrature = XQuadrature()):
    """Both orders of integration for ``int_R int_(0,T] f(mu_t, t, x) o dmu_t dx``.

    Returns ``(lhs, rhs)``: ``lhs`` integrates per-``x`` symmetric sums over
    ``x``; ``rhs`` takes the symmetric sum of the ``x``-integrated integrand.
    """
    x, w = x_quad.nodes()
    vals = f(mu.values[:, None], mu.times[:, None], x[None, :])
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    edge = float(max(np.max(np.abs(vals[:, 0])), np.max(np.abs(vals[:, -1]))))
    if edge > 1e-8 * scale:
        warnings.warn(
            f"integrand reaches {edge:.2e} at x = +/-{x_quad.half_width}; truncation error likely",
            DomainTruncationWarning,
            stacklevel=2,
        )
    per_x = np.array([symmetric_sum(vals[:, j], mu) for j in range(x.size)])
    lhs = math.fsum(per_x * w)
    rhs = symmetric_sum(vals @ w, mu)
    return lhs, rhs
