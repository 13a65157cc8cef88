"""Smooth transition and bump profiles used across the toolkit.

Everything here is C-infinity, built from exp(-1/x), so blended geometry
coefficients stay smooth to all orders and finite-difference convergence is
not limited by the profiles.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "smoothstep",
    "smoothstep_prime",
    "poly_step",
    "poly_step_prime",
    "bump",
    "window_bump",
]


def _f(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, strictly monotone between."""
    x = np.asarray(x, dtype=float)
    a = _f(x)
    b = _f(1.0 - x)
    return a / (a + b + np.where((a + b) == 0.0, 1.0, 0.0))


def smoothstep_prime(x):
    """Derivative of :func:`smoothstep` (vanishes to all orders at 0 and 1)."""
    x = np.asarray(x, dtype=float)
    a = _f(x)
    b = _f(1.0 - x)
    da = np.zeros_like(x)
    db = np.zeros_like(x)
    inside = (x > 0.0) & (x < 1.0)
    da[inside] = a[inside] / x[inside] ** 2
    db[inside] = b[inside] / (1.0 - x[inside]) ** 2
    denom = (a + b) ** 2
    denom[~inside] = 1.0
    out = np.zeros_like(x)
    out[inside] = (da[inside] * b[inside] + a[inside] * db[inside]) / denom[inside]
    return out


# 11th-order polynomial step: value 0/1 with five vanishing derivatives at
# each end (C^5 joins).  Unlike the exponential step its higher derivatives
# stay moderate, which matters when blended coefficients sit under a
# 4th-order stencil: s'''''(x) stays below ~4e2 on the unit interval.
_POLY11 = np.array([462.0, -1980.0, 3465.0, -3080.0, 1386.0, -252.0])


def poly_step(x):
    """C^5 polynomial step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    xi = np.clip(x, 0.0, 1.0)
    acc = np.zeros_like(xi)
    for k, c in enumerate(_POLY11):
        acc += c * xi ** (6 + k)
    return acc


def poly_step_prime(x):
    x = np.asarray(x, dtype=float)
    xi = np.clip(x, 0.0, 1.0)
    acc = np.zeros_like(xi)
    for k, c in enumerate(_POLY11):
        acc += c * (6 + k) * xi ** (5 + k)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, acc, 0.0)


def bump(xi):
    """C-infinity bump on (-1, 1): exp(1 - 1/(1 - xi^2)), peak value 1 at 0."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros_like(xi)
    inside = np.abs(xi) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - xi[inside] ** 2))
    return out


def window_bump(x, lo, inner_lo, inner_hi, hi):
    """Plateau cutoff: 0 below lo / above hi, 1 on [inner_lo, inner_hi]."""
    x = np.asarray(x, dtype=float)
    up = smoothstep((x - lo) / (inner_lo - lo))
    down = smoothstep((hi - x) / (hi - inner_hi))
    return up * down
