"""Quadrature weights and the standard smooth bump used throughout."""

import math

import numpy as np
from scipy import integrate


def simpson_weights(n_panels, h):
    """Composite Simpson weights for ``n_panels`` (even) panels of width ``h``."""
    if n_panels < 2 or n_panels % 2:
        raise ValueError(f"Simpson needs an even number of panels >= 2, got {n_panels}")
    w = np.ones(n_panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def simpson_nodes(a, b, n_panels):
    """Nodes and weights of composite Simpson on ``[a, b]``."""
    n_panels = int(n_panels) + (int(n_panels) % 2)
    x = np.linspace(a, b, n_panels + 1)
    return x, simpson_weights(n_panels, (b - a) / n_panels)


def trapezoid_cumulative(y, h):
    """Running trapezoid integral along the first axis, starting at 0."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]), axis=0)
    return out


def bump(z):
    """``exp(-1/(1-z^2))`` on ``|z| < 1``, zero elsewhere."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (1.0 - zi * zi))
    return out


def bump_prime(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    q = 1.0 - zi * zi
    out[inside] = np.exp(-1.0 / q) * (-2.0 * zi / (q * q))
    return out


BUMP_MASS = integrate.quad(
    lambda z: math.exp(-1.0 / (1.0 - z * z)), -1.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200
)[0]

# dense scan; callers pad it slightly when using it as a Lipschitz bound
BUMP_PRIME_MAX = float(np.max(np.abs(bump_prime(np.linspace(-1.0, 1.0, 200001)))))
