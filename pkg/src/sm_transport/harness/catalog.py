"""Named integrands and random field pairs used by the scenario studies."""

from __future__ import annotations

import numpy as np

from ..quadrature import bump
from ..symint import Integrand, ParamIntegrand
from ..uniqueness import ShiftedField


def chain_rule_integrand(name: str) -> Integrand:
    if name == "sin_exp":
        return Integrand(lambda y, t: np.sin(y) * np.exp(t),
                         lambda y, t: np.cos(y) * np.exp(t),
                         lambda y, t: np.sin(y) * np.exp(t), "sin(y) e^t")
    if name == "cos":
        return Integrand(lambda y, t: np.cos(y), lambda y, t: -np.sin(y),
                         lambda y, t: 0.0 * y, "cos(y)")
    if name == "identity":
        return Integrand(lambda y, t: y, lambda y, t: 1.0 + 0.0 * y,
                         lambda y, t: 0.0 * y, "y")
    if name == "square":
        return Integrand(lambda y, t: y * y, lambda y, t: 2.0 * y,
                         lambda y, t: 0.0 * y, "y^2")
    raise KeyError(name)


def fubini_integrands() -> list[tuple[ParamIntegrand, bool]]:
    """``(integrand, separable)`` pairs, each negligible at ``|x| = 10``."""
    return [
        (ParamIntegrand(lambda y, t, x: bump(x) + 0.0 * y, g=bump, label="bump(x)"), True),
        (ParamIntegrand(lambda y, t, x: bump(x) * y, label="bump(x) y"), True),
        (ParamIntegrand(lambda y, t, x: np.exp(-x * x) * np.sin(y + t),
                        g=lambda x: np.exp(-x * x), label="exp(-x^2) sin(y+t)"), False),
    ]


def random_commutator_pair(rng: np.random.Generator) -> tuple[ShiftedField, ShiftedField]:
    """A smooth drift ``B`` and a smooth localized field ``V`` with analytic derivatives."""
    a1, a2 = rng.uniform(0.2, 1.0, size=2)
    k1 = rng.uniform(0.5, 2.0)
    p1 = rng.uniform(0.0, 2.0 * np.pi)
    c2 = rng.uniform(-1.0, 1.0)
    s2 = rng.uniform(0.8, 1.5)
    cv = rng.uniform(-1.0, 1.0)
    sv = rng.uniform(0.7, 1.5)
    kv = rng.uniform(0.5, 2.5)

    def b(t, z):
        return a1 * np.sin(k1 * z + p1 + t) + a2 * np.exp(-((z - c2) / s2) ** 2)

    def b_z(t, z):
        g = np.exp(-((z - c2) / s2) ** 2)
        return a1 * k1 * np.cos(k1 * z + p1 + t) - 2.0 * a2 * (z - c2) / s2 ** 2 * g

    def v(t, z):
        return np.exp(-((z - cv) / sv) ** 2) * np.cos(kv * z)

    def v_z(t, z):
        g = np.exp(-((z - cv) / sv) ** 2)
        return g * (-2.0 * (z - cv) / sv ** 2 * np.cos(kv * z) - kv * np.sin(kv * z))

    return ShiftedField(b, b_z, "B[random]"), ShiftedField(v, v_z, "V[random]")
