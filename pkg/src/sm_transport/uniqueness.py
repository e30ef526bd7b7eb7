"""Numerical counterparts of the uniqueness argument.

With ``u0 = 0`` a weak solution is shifted along the noise,
``V(t, z) = u(t, z + mu_t)``, and the drift likewise, ``B(t, z) = b(t, z + mu_t)``.
Mollifying ``V`` produces the commutator

    R_eps(B, V) = B d/dx (phi_eps * V) - phi_eps * (B dV/dx),

whose vanishing as ``eps -> 0`` turns the transport identity into the energy
identity

    int V^2 pi_r dx = int_0^t int V^2 pi_r dB/dx dx ds + int_0^t int B V^2 pi_r' dx ds,

and a Gronwall bound then forces ``V = 0``.  This module evaluates every piece
by quadrature so each step can be checked on concrete fields.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import PreconditionError, ResolutionError
from .flow import DriftField
from .noise import NoisePath
from .quadrature import BUMP_MASS, bump, simpson_nodes, simpson_weights, trapezoid_cumulative
from .report import dump_json

# ---------------------------------------------------------------------------
# shifted fields
# ---------------------------------------------------------------------------


class ShiftedField:
    """A field ``F(t, z)`` on the noise-shifted frame, with optional ``dF/dz``."""

    def __init__(self, func: Callable, deriv: Callable | None = None, label: str = ""):
        self.func = func
        self.deriv = deriv
        self.label = label

    def __call__(self, t, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(self.func(t, z), dtype=float) * np.ones_like(z)

    def dz(self, t, z):
        if self.deriv is None:
            return None
        z = np.asarray(z, dtype=float)
        return np.asarray(self.deriv(t, z), dtype=float) * np.ones_like(z)

    @classmethod
    def constant(cls, value: float) -> "ShiftedField":
        return cls(lambda t, z: value + 0.0 * z, lambda t, z: 0.0 * z, f"constant({value})")

    @classmethod
    def from_drift(cls, drift: DriftField, path: NoisePath) -> "ShiftedField":
        """``B(t, z) = b(t, z + mu_t)`` and ``B_z = b_x(t, z + mu_t)``."""
        return cls(
            lambda t, z: drift(t, z + path(t)),
            lambda t, z: drift.dx(t, z + path(t)),
            f"B[{drift.label}]",
        )

    @classmethod
    def from_solution(cls, u, polish: bool = True) -> "ShiftedField":
        """``V(t, z) = u(t, z + mu_t)`` for ``t`` on the path grid.

        ``polish=False`` inverts the flow from its table only (much cheaper).
        """
        path = u.path

        def index(t):
            k = int(round(t / path.grid.dt))
            if abs(path.times[k] - t) > 1e-9 * max(1.0, path.grid.horizon):
                raise PreconditionError(f"t={t} is not a node of the path grid")
            return k

        def func(t, z):
            k = index(t)
            return u(k, z + path.values[k], polish=polish)

        deriv = None
        if hasattr(u, "dx"):
            def deriv(t, z):
                k = index(t)
                return u.dx(k, z + path.values[k])

        return cls(func, deriv, "V[solution]")


# ---------------------------------------------------------------------------
# mollifier and cutoff
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Mollifier:
    """``phi_eps(x) = phi(x / eps) / eps`` with the unit-mass bump ``phi`` on ``[-1, 1]``."""

    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise PreconditionError(f"eps must be positive, got {self.eps}")

    def __call__(self, x):
        return bump(np.asarray(x, dtype=float) / self.eps) / (self.eps * BUMP_MASS)

    def mass(self, n_panels: int = 4000) -> float:
        x, w = simpson_nodes(-self.eps, self.eps, n_panels)
        return float(self(x) @ w)

    def weights(self, dx: float) -> np.ndarray:
        """Discrete kernel on offsets ``j dx``, ``|j dx| <= eps``, summing to one."""
        if self.eps < 2.0 * dx * (1 - 1e-12):
            raise ResolutionError(f"eps={self.eps} is below 2*dx={2 * dx}; kernel unresolved")
        m = int(math.floor(self.eps / dx * (1 + 1e-12)))
        offsets = np.arange(-m, m + 1) * dx
        w = self(offsets) * simpson_weights(2 * m, dx)
        return w / w.sum()


def mollify(values, dx: float, eps: float) -> np.ndarray:
    """``phi_eps * f`` on a uniform grid, zero outside the window.

    Values within ``eps`` of the window edge see the zero padding; callers
    that need the full-line convolution trim that margin.
    """
    return np.convolve(np.asarray(values, dtype=float), Mollifier(eps).weights(dx), mode="same")


def _gl_rule(n: int = 64):
    u, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (u + 1.0), 0.5 * w


_GL_U, _GL_W = _gl_rule()


def _rise(sigma):
    """``int_0^sigma bump(2 tau - 1) d tau`` by Gauss-Legendre, ``sigma`` in ``[0, 1]``."""
    sigma = np.asarray(sigma, dtype=float)
    return sigma * (bump(2.0 * sigma[..., None] * _GL_U - 1.0) @ _GL_W)


_RISE_TOTAL = float(_rise(np.array(1.0)))


def _pi1(x):
    a = np.abs(np.asarray(x, dtype=float))
    sigma = np.clip(a - 1.0, 0.0, 1.0)
    return np.clip(1.0 - _rise(sigma) / _RISE_TOTAL, 0.0, 1.0)


def _pi1_prime(x):
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    return -np.sign(x) * bump(2.0 * (a - 1.0) - 1.0) / _RISE_TOTAL


@dataclass(frozen=True)
class Cutoff:
    """``pi_r(x) = pi_1(x / r)``: one on ``|x| <= r``, zero on ``|x| >= 2r``.

    The transition integrates the standard bump, so ``|pi_r'| <= C / r`` with
    ``C = 2 e^{-1} / int bump ~ 1.657``.
    """

    r: float

    C = 2.0 * math.exp(-1.0) / BUMP_MASS

    def __post_init__(self):
        if self.r <= 0:
            raise PreconditionError(f"cutoff radius must be positive, got {self.r}")

    def __call__(self, x):
        return _pi1(np.asarray(x, dtype=float) / self.r)

    def prime(self, x):
        return _pi1_prime(np.asarray(x, dtype=float) / self.r) / self.r


# ---------------------------------------------------------------------------
# commutator
# ---------------------------------------------------------------------------


@dataclass
class CommutatorField:
    x: np.ndarray
    values: np.ndarray
    eps: float
    t: float

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def l1_norm(self) -> float:
        v = np.abs(self.values)
        return float(self.dx * (v.sum() - 0.5 * (v[0] + v[-1])))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))


def _derivative(field_: ShiftedField, t, x, dx):
    d = field_.dz(t, x)
    if d is None:
        d = np.gradient(field_(t, x), dx, edge_order=2)
    return d


def commutator(B: ShiftedField, V: ShiftedField, eps: float, t: float, x,
               trim: float | None = None) -> CommutatorField:
    """``B d(phi_eps * V)/dx - phi_eps * (B dV/dx)`` on the interior of ``x``.

    ``d(phi_eps * V)/dx`` is taken as ``phi_eps * dV/dx``.  Analytic ``dV/dz``
    is used when ``V`` supplies it; otherwise centered differences, which
    require ``dx <= eps / 8``.  ``trim`` (default ``eps``) is the margin cut
    from each end of the window.
    """
    x = np.asarray(x, dtype=float)
    dx = float(x[1] - x[0])
    if V.deriv is None and dx > eps / 8.0 * (1 + 1e-12):
        raise ResolutionError(f"finite-difference commutator needs dx <= eps/8, got dx={dx}, eps={eps}")
    kernel = Mollifier(eps).weights(dx)
    bv = B(t, x)
    vz = _derivative(V, t, x, dx)
    values = bv * np.convolve(vz, kernel, mode="same") - np.convolve(bv * vz, kernel, mode="same")
    trim = eps if trim is None else trim
    m = int(math.ceil(trim / dx * (1 - 1e-12)))
    return CommutatorField(x[m: x.size - m], values[m: x.size - m], eps, t)


@dataclass
class CommutatorDecay:
    eps: list[float]
    l1: list[float]
    sup: list[float]

    def ratios(self) -> list[float]:
        return [a / b if b > 0 else math.inf for a, b in zip(self.l1[:-1], self.l1[1:])]

    def non_increasing(self) -> bool:
        return all(b <= a for a, b in zip(self.l1[:-1], self.l1[1:]))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eps", "l1_norm", "sup_norm"])
            for row in zip(self.eps, self.l1, self.sup):
                writer.writerow([repr(float(v)) for v in row])


def commutator_decay(B: ShiftedField, V: ShiftedField, eps_values: Sequence[float], t: float,
                     x) -> CommutatorDecay:
    """Commutator norms for each ``eps`` over one common interior window."""
    trim = max(eps_values)
    l1, sup = [], []
    for eps in eps_values:
        c = commutator(B, V, eps, t, x, trim=trim)
        l1.append(c.l1_norm())
        sup.append(c.sup_norm())
    return CommutatorDecay([float(e) for e in eps_values], l1, sup)


# ---------------------------------------------------------------------------
# energy identity and Gronwall
# ---------------------------------------------------------------------------


@dataclass
class EnergyRow:
    t: float
    lhs: float
    rhs_drift_term: float
    rhs_tail_term: float
    discrepancy: float
    tail_instant: float
    tail_bound: float

    @property
    def bound_ok(self) -> bool:
        return abs(self.tail_instant) <= self.tail_bound


@dataclass
class EnergyReport:
    r: float
    rows: list[EnergyRow] = field(default_factory=list)
    energy_series: np.ndarray | None = None
    tail_cumulative: np.ndarray | None = None
    times: np.ndarray | None = None

    def to_csv(self, path) -> None:
        cols = ["t", "lhs", "rhs_drift_term", "rhs_tail_term", "discrepancy"]
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in self.rows:
                writer.writerow([repr(float(getattr(row, c))) for c in cols])


def energy_identity_check(V: ShiftedField, B: ShiftedField, r: float, times, t_indices: Sequence[int],
                          n_panels: int = 800, bound_constant: float = 4.0) -> EnergyReport:
    """Evaluate the three terms of the localized energy identity.

    ``times`` is the uniform time grid; spatial integrals use Simpson on
    ``[-2r, 2r]`` and time integrals the trapezoid rule.  Each row also
    carries the instantaneous tail term and its bound
    ``(bound_constant / r) sup|V|^2 int_{r<=|x|<=2r} |B| dx``.
    """
    times = np.asarray(times, dtype=float)
    cut = Cutoff(r)
    x, w = simpson_nodes(-2.0 * r, 2.0 * r, n_panels)
    xa, wa = simpson_nodes(r, 2.0 * r, max(2, n_panels // 4))
    pi, dpi = cut(x), cut.prime(x)
    dx = x[1] - x[0]
    k_max = max(t_indices)
    energy = np.empty(k_max + 1)
    drift_term = np.empty(k_max + 1)
    tail = np.empty(k_max + 1)
    sup_v2 = np.empty(k_max + 1)
    annulus = np.empty(k_max + 1)
    for k in range(k_max + 1):
        t = times[k]
        v2 = V(t, x) ** 2
        bv = B(t, x)
        bz = _derivative(B, t, x, dx)
        energy[k] = (v2 * pi) @ w
        drift_term[k] = (v2 * pi * bz) @ w
        tail[k] = (bv * v2 * dpi) @ w
        sup_v2[k] = v2.max()
        annulus[k] = np.abs(B(t, xa)) @ wa + np.abs(B(t, -xa)) @ wa
    h = times[1] - times[0] if times.size > 1 else 0.0
    drift_cum = trapezoid_cumulative(drift_term, h)
    tail_cum = trapezoid_cumulative(tail, h)
    report = EnergyReport(r, energy_series=energy, tail_cumulative=tail_cum, times=times[: k_max + 1])
    for k in t_indices:
        bound = bound_constant / r * sup_v2[k] * annulus[k]
        report.rows.append(EnergyRow(float(times[k]), float(energy[k]), float(drift_cum[k]),
                                     float(tail_cum[k]),
                                     float(energy[k] - drift_cum[k] - tail_cum[k]),
                                     float(tail[k]), float(bound)))
    return report


@dataclass
class GronwallReport:
    bound: np.ndarray
    premise_rhs: np.ndarray
    premise_ok: bool
    conclusion_ok: bool
    tightness: float

    @property
    def passed(self) -> bool:
        return self.premise_ok and self.conclusion_ok


def gronwall_bound(h, times, K: float, R: float, rtol: float = 1e-12) -> GronwallReport:
    """Check ``h <= K int_0^t h + R`` and its consequence ``h <= R e^{K t}``.

    The integral is the trapezoid rule on ``times``.  ``tightness`` is
    ``max h / bound`` over nodes with a positive bound.
    """
    h = np.asarray(h, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.any(h < 0) or not np.all(np.isfinite(h)):
        raise PreconditionError("Gronwall series must be finite and non-negative")
    if K < 0 or R < 0:
        raise PreconditionError(f"K and R must be non-negative, got K={K}, R={R}")
    step = times[1] - times[0] if times.size > 1 else 0.0
    premise_rhs = K * trapezoid_cumulative(h, step) + R
    bound = R * np.exp(K * times)
    slack = rtol * np.maximum(1.0, np.abs(premise_rhs))
    premise_ok = bool(np.all(h <= premise_rhs + slack))
    conclusion_ok = bool(np.all(h <= bound + rtol * np.maximum(1.0, bound)))
    positive = bound > 0
    tightness = float(np.max(h[positive] / bound[positive])) if np.any(positive) else 0.0
    return GronwallReport(bound, premise_rhs, premise_ok, conclusion_ok, tightness)


def uniqueness_pipeline(u, r: float, t_indices: Sequence[int], n_panels: int = 800):
    """Energy identity and Gronwall bound for a solution field ``u``.

    For ``u0 = 0`` every term vanishes; the pipeline must not create energy.
    Returns ``(energy_report, gronwall_report)``.
    """
    V = ShiftedField.from_solution(u, polish=False)
    B = ShiftedField.from_drift(u.drift, u.path)
    energy = energy_identity_check(V, B, r, u.path.times, t_indices, n_panels)
    R = float(np.max(np.abs(energy.tail_cumulative)))
    gron = gronwall_bound(energy.energy_series, energy.times, u.drift.lipschitz, R)
    return energy, gron


def energy_summary(report: EnergyReport) -> dict:
    return {
        "r": report.r,
        "max_energy": float(max(row.lhs for row in report.rows)),
        "max_abs_discrepancy": float(max(abs(row.discrepancy) for row in report.rows)),
        "tail_bound_ok": all(row.bound_ok for row in report.rows),
    }


def write_energy_json(report: EnergyReport, path) -> None:
    dump_json(energy_summary(report), path)
