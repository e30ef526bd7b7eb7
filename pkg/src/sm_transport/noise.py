"""Sample paths of continuous stochastic measures on uniform time grids.

A stochastic measure on ``[0, T]`` enters every downstream computation only
through its distribution function ``mu_t = mu((0, t])``.  This module realizes
that process for

* the Wiener process (nested Brownian-bridge generation, so that refining the
  grid with the same seed refines the *same* path),
* fractional Brownian motion with Hurst index ``H`` in ``[1/2, 1)``,
* sub-fractional Brownian motion with the same range of ``H``,
* deterministic smooth paths used to validate solvers against closed forms.

Gaussian paths other than Wiener are drawn by a dense Cholesky factorization of
the covariance at the grid nodes.  Such paths cannot be nested seed-wise, so
refinement studies draw them once on the finest grid and use
:meth:`NoisePath.coarsen` for the coarser levels.
"""

from __future__ import annotations

import csv
import enum
import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, GenerationError, PreconditionError

MAX_DENSE_STEPS = 4096


class NoiseKind(str, enum.Enum):
    WIENER = "wiener"
    FBM = "fbm"
    SUBFBM = "subfbm"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``t_k = k T / n_steps`` of ``[0, T]``."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon!r}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        # exact endpoints: t_0 = 0 and t_n = T
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)

    def coarsen(self, factor: int = 2) -> "TimeGrid":
        if self.n_steps % factor:
            raise ConfigurationError(f"{self.n_steps} steps cannot be coarsened by {factor}")
        return TimeGrid(self.horizon, self.n_steps // factor)


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    grid: TimeGrid
    seed: int = 0
    hurst: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.kind in (NoiseKind.FBM, NoiseKind.SUBFBM):
            if self.hurst is None or not 0.5 <= self.hurst < 1.0:
                raise ConfigurationError(
                    f"Hurst index must lie in [0.5, 1) for {self.kind.value}, got {self.hurst!r}"
                )
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One realized trajectory of ``mu_t`` on a :class:`TimeGrid`.

    Values are read-only.  Between nodes the path is interpolated linearly.
    """

    grid: TimeGrid
    values: np.ndarray
    kind: NoiseKind
    seed: int = 0
    hurst: float | None = None
    label: str = field(default="")

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_steps + 1,):
            raise ConfigurationError(
                f"path needs {self.grid.n_steps + 1} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise GenerationError("path contains non-finite values")
        if values[0] != 0.0:
            raise PreconditionError(f"path must start at 0, got {values[0]!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def coarsen(self, n_steps: int) -> "NoisePath":
        """Subsample onto the nested grid with ``n_steps`` intervals."""
        if n_steps < 1 or self.grid.n_steps % n_steps:
            raise ConfigurationError(
                f"cannot subsample {self.grid.n_steps} steps onto {n_steps} steps"
            )
        stride = self.grid.n_steps // n_steps
        return NoisePath(
            TimeGrid(self.grid.horizon, n_steps),
            self.values[::stride],
            self.kind,
            self.seed,
            self.hurst,
            self.label,
        )

    def truncate(self, k: int) -> "NoisePath":
        """Restriction to ``[0, t_k]``."""
        if not 1 <= k <= self.grid.n_steps:
            raise ConfigurationError(f"truncation index {k} outside 1..{self.grid.n_steps}")
        return NoisePath(
            TimeGrid(float(self.times[k]), k), self.values[: k + 1], self.kind, self.seed, self.hurst
        )

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                writer.writerow([repr(float(t)), repr(float(v))])


# ---------------------------------------------------------------------------
# covariance kernels
# ---------------------------------------------------------------------------

def fbm_covariance(s, t, hurst):
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    a = 2.0 * hurst
    return 0.5 * (np.abs(s) ** a + np.abs(t) ** a - np.abs(t - s) ** a)


def subfbm_covariance(s, t, hurst):
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    a = 2.0 * hurst
    return np.abs(s) ** a + np.abs(t) ** a - 0.5 * (np.abs(s + t) ** a + np.abs(t - s) ** a)


def wiener_covariance(s, t, hurst=None):
    return np.minimum(np.asarray(s, dtype=float), np.asarray(t, dtype=float))


def theoretical_covariance(kind, times, hurst=None) -> np.ndarray:
    kind = NoiseKind(kind)
    kernels = {
        NoiseKind.WIENER: wiener_covariance,
        NoiseKind.FBM: fbm_covariance,
        NoiseKind.SUBFBM: subfbm_covariance,
    }
    if kind not in kernels:
        raise PreconditionError(f"no theoretical covariance for {kind.value} paths")
    times = np.asarray(times, dtype=float)
    return kernels[kind](times[:, None], times[None, :], hurst)


@functools.lru_cache(maxsize=16)
def _cholesky_factor(kind: NoiseKind, hurst: float, horizon: float, n_steps: int) -> np.ndarray:
    times = TimeGrid(horizon, n_steps).nodes[1:]
    cov = theoretical_covariance(kind, times, hurst)
    scale = float(np.max(np.diag(cov)))
    for jitter in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            factor = np.linalg.cholesky(cov + jitter * scale * np.eye(n_steps))
        except np.linalg.LinAlgError:
            continue
        factor.setflags(write=False)
        return factor
    smallest = float(np.linalg.eigvalsh(cov)[0])
    raise GenerationError(
        f"{kind.value} covariance (H={hurst}, n={n_steps}) is not positive definite "
        f"after jitter; smallest eigenvalue estimate {smallest:.3e}"
    )


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def sample_wiener(spec: NoiseSpec) -> NoisePath:
    """Wiener path generated by Brownian-bridge midpoint insertion.

    Write ``n_steps = m * 2**j`` with ``m`` odd.  The ``m`` coarsest increments
    come from stream 0 of the seed; level ``l`` midpoints come from stream
    ``l``.  Grids sharing ``m`` therefore share the path at common nodes.
    """
    if NoiseKind(spec.kind) is not NoiseKind.WIENER:
        raise ConfigurationError(f"sample_wiener called with kind {spec.kind.value}")
    n, horizon = spec.grid.n_steps, spec.grid.horizon
    base = n
    levels = 0
    while base % 2 == 0:
        base //= 2
        levels += 1
    dt = horizon / base
    values = np.zeros(base + 1)
    values[1:] = np.cumsum(_rng(spec.seed, 0).standard_normal(base) * np.sqrt(dt))
    for level in range(1, levels + 1):
        z = _rng(spec.seed, level).standard_normal(values.size - 1)
        mid = 0.5 * (values[:-1] + values[1:]) + 0.5 * np.sqrt(dt) * z
        fine = np.empty(2 * values.size - 1)
        fine[0::2] = values
        fine[1::2] = mid
        values = fine
        dt *= 0.5
    return NoisePath(spec.grid, values, NoiseKind.WIENER, spec.seed)


def _sample_dense(spec: NoiseSpec, kind: NoiseKind) -> NoisePath:
    if NoiseKind(spec.kind) is not kind:
        raise ConfigurationError(f"expected kind {kind.value}, got {spec.kind.value}")
    n = spec.grid.n_steps
    if n > MAX_DENSE_STEPS:
        raise ConfigurationError(f"dense factorization limited to {MAX_DENSE_STEPS} steps, got {n}")
    factor = _cholesky_factor(kind, float(spec.hurst), float(spec.grid.horizon), n)
    z = _rng(spec.seed, 0).standard_normal(n)
    values = np.concatenate(([0.0], factor @ z))
    return NoisePath(spec.grid, values, kind, spec.seed, spec.hurst)


def sample_fbm(spec: NoiseSpec) -> NoisePath:
    """Fractional Brownian motion ``R(s,t) = (s^2H + t^2H - |t-s|^2H) / 2``."""
    return _sample_dense(spec, NoiseKind.FBM)


def sample_subfbm(spec: NoiseSpec) -> NoisePath:
    """Sub-fractional Brownian motion
    ``C(s,t) = s^2H + t^2H - ((s+t)^2H + |t-s|^2H) / 2``."""
    return _sample_dense(spec, NoiseKind.SUBFBM)


def deterministic_path(g: Callable, grid: TimeGrid, label: str = "") -> NoisePath:
    """Tabulate a smooth function with ``g(0) = 0`` on ``grid``.

    ``g`` may be vectorized or scalar-only.
    """
    t = grid.nodes
    try:
        values = np.broadcast_to(np.asarray(g(t), dtype=float), t.shape).copy()
    except (TypeError, ValueError):
        values = np.array([float(g(s)) for s in t])
    if values[0] != 0.0:
        raise PreconditionError(f"deterministic path needs g(0) = 0, got {values[0]!r}")
    return NoisePath(grid, values, NoiseKind.DETERMINISTIC, label=label)


def sample_path(spec: NoiseSpec) -> NoisePath:
    """Dispatch on ``spec.kind``."""
    kind = NoiseKind(spec.kind)
    if kind is NoiseKind.WIENER:
        return sample_wiener(spec)
    if kind is NoiseKind.FBM:
        return sample_fbm(spec)
    if kind is NoiseKind.SUBFBM:
        return sample_subfbm(spec)
    raise ConfigurationError("deterministic paths are built with deterministic_path()")


# ---------------------------------------------------------------------------
# self-validation
# ---------------------------------------------------------------------------

@dataclass
class CovarianceReport:
    empirical: np.ndarray
    theoretical: np.ndarray
    standard_error: np.ndarray
    max_abs_deviation: float
    max_z_score: float
    n_paths: int


def empirical_covariance(paths: Sequence[NoisePath], kind=None, hurst=None) -> CovarianceReport:
    """Sample covariance at the grid nodes compared with theory.

    ``kind``/``hurst`` default to those declared by the first path.  The
    standard error of entry ``(i, j)`` uses the Gaussian fourth-moment identity
    ``Var(X_i X_j) = S_ii S_jj + S_ij^2``.
    """
    if len(paths) < 2:
        raise PreconditionError("empirical covariance needs at least two paths")
    grid = paths[0].grid
    for p in paths[1:]:
        if p.grid != grid:
            raise PreconditionError(f"mismatched grids: {p.grid} vs {grid}")
    kind = NoiseKind(kind if kind is not None else paths[0].kind)
    hurst = hurst if hurst is not None else paths[0].hurst
    data = np.stack([p.values for p in paths])
    emp = np.cov(data, rowvar=False)
    theory = theoretical_covariance(kind, grid.nodes, hurst)
    d = np.diag(theory)
    se = np.sqrt((np.outer(d, d) + theory**2) / len(paths))
    dev = np.abs(emp - theory)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, dev / se, np.where(dev > 0, np.inf, 0.0))
    return CovarianceReport(emp, theory, se, float(dev.max()), float(z.max()), len(paths))
