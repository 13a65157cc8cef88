"""Kerr background geometry in horizon-penetrating charts.

Provides the metric and inverse metric in four charts (Boyer-Lindquist,
ingoing, stationary with azimuth regularized near the horizon, and a
Cartesian-like chart built on a blended radial coordinate), the tortoise
coordinate, the time-slicing function that makes the level sets spacelike
across the horizon, and the coefficients of the covariant wave operator in
divergence form.

Index order for all 4x4 component arrays in spherical-type charts is
(time, r, theta, azimuth); the Cartesian-like chart uses (time, x1, x2, x3).
Geometric units G = c = 1 throughout; lengths in units of the mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .profiles import poly_step, poly_step_prime
from .stencils import diff_closed_form

__all__ = [
    "CHART_BL",
    "CHART_INGOING",
    "CHART_STATIONARY",
    "CHART_CARTESIAN",
    "KerrParams",
    "MetricComponents",
    "ChartPoint",
    "TimeSlicing",
    "RadialMap",
    "KerrGeometry",
    "BoxKCoefficients",
    "SymbolDecayReport",
    "MuConstructionError",
    "horizon_radii",
    "bl_metric",
    "bl_inverse_metric",
    "ingoing_metric",
    "rstar",
    "build_mu",
    "stationary_metric",
    "build_radial_map",
    "cartesian_chart",
    "stationary_from_cartesian",
    "symbol_class_check",
]

CHART_BL = "boyer_lindquist"
CHART_INGOING = "ingoing_kerr"
CHART_STATIONARY = "stationary"
CHART_CARTESIAN = "cartesianized"

SPIN_SMALLNESS_FRACTION = 0.1  # default regime: a <= M/10


class MuConstructionError(RuntimeError):
    """Slicing construction violated one of its two defining conditions."""


@dataclass(frozen=True)
class KerrParams:
    """Mass and specific angular momentum of the background.

    The toolkit targets the slowly rotating regime; constructing parameters
    with a > M/10 requires `allow_large_spin=True` (still subextremal only).
    """

    M: float
    a: float = 0.0
    allow_large_spin: bool = False

    def __post_init__(self):
        if self.M <= 0.0:
            raise ValueError(f"mass must be positive, got M={self.M}")
        if not 0.0 <= self.a < self.M:
            raise ValueError(
                f"spin must satisfy 0 <= a < M (subextremal), got a={self.a}, M={self.M}"
            )
        if self.a > SPIN_SMALLNESS_FRACTION * self.M and not self.allow_large_spin:
            raise ValueError(
                f"a={self.a} exceeds the default smallness bound M/10={self.M / 10};"
                " pass allow_large_spin=True to override"
            )

    @property
    def r_plus(self) -> float:
        return self.M + np.sqrt(self.M**2 - self.a**2)

    @property
    def r_minus(self) -> float:
        return self.M - np.sqrt(self.M**2 - self.a**2)

    @property
    def r_excision(self) -> float:
        # r_- < r_e < r_+ always holds for M-valued excision at small spin
        return self.M

    def delta(self, r):
        r = np.asarray(r, dtype=float)
        return r * r - 2.0 * self.M * r + self.a**2

    def rho2(self, r, theta):
        r = np.asarray(r, dtype=float)
        return r * r + (self.a * np.cos(theta)) ** 2


def horizon_radii(params: KerrParams) -> tuple[float, float]:
    """Roots of Delta: (r_-, r_+). Rejects extremal and superextremal spins."""
    if params.a >= params.M:
        raise ValueError("horizons require a < M")
    return params.r_minus, params.r_plus


@dataclass
class MetricComponents:
    """Symmetric 4x4 component array with its chart and variance tag."""

    g: np.ndarray
    kind: str  # "metric" | "inverse_metric"
    chart: str

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.shape[-2:] != (4, 4):
            raise ValueError(f"component array must end in (4, 4), got {self.g.shape}")
        if self.kind not in ("metric", "inverse_metric"):
            raise ValueError(f"unknown kind {self.kind!r}")

    def inverse(self) -> "MetricComponents":
        kind = "inverse_metric" if self.kind == "metric" else "metric"
        return MetricComponents(np.linalg.inv(self.g), kind, self.chart)

    def contraction_error(self, other: "MetricComponents") -> float:
        """Max-norm deviation of g . other from the identity."""
        prod = np.einsum("...ij,...jk->...ik", self.g, other.g)
        eye = np.eye(4)
        return float(np.max(np.abs(prod - eye)))

    def lorentzian(self) -> bool:
        """True when every sampled point has signature (-,+,+,+)."""
        ev = np.linalg.eigvalsh(self.g)
        return bool(np.all(np.sum(ev < 0.0, axis=-1) == 1))


def _symmetrize_batch(shape, entries):
    """Assemble a symmetric (..., 4, 4) array from an {(i, j): value} map."""
    g = np.zeros(shape + (4, 4))
    for (i, j), val in entries.items():
        g[..., i, j] = val
        if i != j:
            g[..., j, i] = val
    return g


def _check_angles(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0.0) or np.any(theta >= np.pi):
        raise ValueError("theta must lie strictly inside (0, pi)")
    return theta


def bl_metric(params: KerrParams, r, theta) -> MetricComponents:
    """Covariant Kerr metric in Boyer-Lindquist coordinates (outside r_+)."""
    r = np.asarray(r, dtype=float)
    theta = _check_angles(theta)
    if np.any(r <= params.r_plus):
        raise ValueError("Boyer-Lindquist chart is only queried outside the horizon")
    r, theta = np.broadcast_arrays(r, theta)
    a, M = params.a, params.M
    dlt = params.delta(r)
    rho2 = params.rho2(r, theta)
    s2 = np.sin(theta) ** 2
    entries = {
        (0, 0): -(dlt - a**2 * s2) / rho2,
        (0, 3): -2.0 * a * M * r * s2 / rho2,
        (1, 1): rho2 / dlt,
        (2, 2): rho2,
        (3, 3): ((r**2 + a**2) ** 2 - a**2 * dlt * s2) * s2 / rho2,
    }
    return MetricComponents(_symmetrize_batch(r.shape, entries), "metric", CHART_BL)


def bl_inverse_metric(params: KerrParams, r, theta) -> MetricComponents:
    """Contravariant Kerr metric in Boyer-Lindquist coordinates."""
    r = np.asarray(r, dtype=float)
    theta = _check_angles(theta)
    if np.any(r <= params.r_plus):
        raise ValueError("Boyer-Lindquist chart is only queried outside the horizon")
    r, theta = np.broadcast_arrays(r, theta)
    a, M = params.a, params.M
    dlt = params.delta(r)
    if np.any(dlt == 0.0):
        raise ValueError("Delta = 0: coordinate singularity")
    rho2 = params.rho2(r, theta)
    s2 = np.sin(theta) ** 2
    entries = {
        (0, 0): -((r**2 + a**2) ** 2 - a**2 * dlt * s2) / (rho2 * dlt),
        (0, 3): -2.0 * a * M * r / (rho2 * dlt),
        (1, 1): dlt / rho2,
        (2, 2): 1.0 / rho2,
        (3, 3): (dlt - a**2 * s2) / (rho2 * dlt * s2),
    }
    return MetricComponents(_symmetrize_batch(r.shape, entries), "inverse_metric", CHART_BL)


def ingoing_metric(params: KerrParams, r, theta) -> MetricComponents:
    """Covariant metric in the ingoing chart (v_+, r, theta, phi_+).

    Smooth and nondegenerate across the event horizon for all r > 0.
    """
    r = np.asarray(r, dtype=float)
    theta = _check_angles(theta)
    r, theta = np.broadcast_arrays(r, theta)
    a, M = params.a, params.M
    dlt = params.delta(r)
    rho2 = params.rho2(r, theta)
    s2 = np.sin(theta) ** 2
    entries = {
        (0, 0): -(1.0 - 2.0 * M * r / rho2),
        (0, 1): np.ones_like(r),
        (0, 3): -2.0 * a * M * r * s2 / rho2,
        (1, 3): -a * s2 * np.ones_like(r),
        (2, 2): rho2,
        (3, 3): ((r**2 + a**2) ** 2 - a**2 * dlt * s2) * s2 / rho2,
    }
    return MetricComponents(_symmetrize_batch(r.shape, entries), "metric", CHART_INGOING)


# ---------------------------------------------------------------------------
# tortoise coordinate
# ---------------------------------------------------------------------------

def rstar(params: KerrParams, r):
    """Tortoise coordinate r*_K with dr*_K = (r^2 + a^2) / Delta dr.

    For a = 0 this is r + 2M log(r - 2M).  For a > 0 the exact antiderivative
    (partial fractions over the two horizon roots) is used with zero
    integration constant, which makes r*_K - r - 2M log(r) vanish at large r
    for every spin.  All spins therefore share one asymptotic normalization,
    the a -> 0 limit reproduces the Schwarzschild closed form exactly, and
    charts built on different spins stay r^-2 close at large radius.
    """
    r = np.asarray(r, dtype=float)
    M, a = params.M, params.a
    if np.any(r <= params.r_plus):
        raise ValueError("tortoise coordinate is defined for r > r_+")
    if a == 0.0:
        return r + 2.0 * M * np.log(r - 2.0 * M)
    rp, rm = params.r_plus, params.r_minus
    return r + (2.0 * M / (rp - rm)) * (rp * np.log(r - rp) - rm * np.log(r - rm))


def drstar_dr(params: KerrParams, r):
    r = np.asarray(r, dtype=float)
    return (r * r + params.a**2) / params.delta(r)


# ---------------------------------------------------------------------------
# time slicing
# ---------------------------------------------------------------------------


@dataclass
class TimeSlicing:
    """The radial reparametrization of time that keeps level sets spacelike.

    mu_prime equals a positive constant c0 below the transition window and
    (r^2 + a^2)/Delta above it.  The blend interpolates the RECIPROCAL of
    the slope through a C^5 polynomial step: 1/mu' runs between 1/c0 and
    Delta/(r^2 + a^2), both moderate smooth functions across the window,
    whereas mu' itself diverges toward the horizon and blending it directly
    produces needlessly steep coefficients.  mu agrees with the tortoise
    coordinate above the window, so the slice time coincides with
    Boyer-Lindquist time far out and with an advanced-type time near the
    horizon.
    """

    params: KerrParams
    c0: float
    window: tuple[float, float]
    _spline: CubicSpline = field(repr=False)
    table_lo: float
    validation: dict = field(default_factory=dict)

    def mu_prime(self, r):
        r = np.asarray(r, dtype=float)
        w0, w1 = self.window
        out = np.full(r.shape, self.c0, dtype=float)
        hi = r >= w1
        mid = (r > w0) & ~hi
        out[hi] = drstar_dr(self.params, r[hi])
        if np.any(mid):
            s = poly_step((r[mid] - w0) / (w1 - w0))
            rm = r[mid]
            recip = (1.0 - s) / self.c0 + s * self.params.delta(rm) / (rm * rm + self.params.a**2)
            out[mid] = 1.0 / recip
        return out

    def mu(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.table_lo):
            raise ValueError(f"mu tabulated only for r >= {self.table_lo}")
        out = np.empty(r.shape, dtype=float)
        hi = r >= self.window[1]
        out[hi] = rstar(self.params, r[hi])
        out[~hi] = self._spline(r[~hi])
        return out

    def mu_double_prime(self, r):
        return diff_closed_form(self.mu_prime, np.asarray(r, dtype=float), 1e-4 * self.params.M)


def build_mu(
    params: KerrParams,
    window: tuple[float, float] | None = None,
    c0: float = 0.5,
    n_samples: int = 10_000,
    n_theta: int = 64,
    table_lo: float | None = None,
) -> TimeSlicing:
    """Construct and validate the slicing function.

    The transition window must sit strictly between the outer horizon and
    5M/2 so that both branches of the blend are regular.  Validation samples
    the two defining conditions densely (n_samples radii, n_theta angles)
    and raises MuConstructionError with the offending point on failure.
    """
    M = params.M
    if window is None:
        window = (2.02 * M, 2.49 * M)
    w0, w1 = window
    if not (params.r_excision < w0 < w1 < 2.5 * M):
        raise ValueError(f"window {window} must satisfy r_e < w0 < w1 < 5M/2")
    if w0 <= params.r_plus:
        raise ValueError(
            f"window start {w0} must exceed r_+ = {params.r_plus}: the outer "
            "branch of the blend diverges at the horizon"
        )
    if c0 <= 0.0:
        raise ValueError("c0 must be positive")

    lo = table_lo if table_lo is not None else 0.8 * params.r_excision
    slicing = TimeSlicing(params, c0, window, CubicSpline([0, 1], [0, 1]), lo, {})

    # integrate mu' downward from the closed-form anchor at w1
    grid = np.linspace(lo, w1, 4 * n_samples + 1)
    mp = slicing.mu_prime(grid)
    dr = grid[1] - grid[0]
    # composite Simpson cumulative integral
    cum = np.zeros_like(grid)
    cum[2::2] = np.cumsum((mp[:-2:2] + 4.0 * mp[1:-1:2] + mp[2::2]) * dr / 3.0)
    cum[1::2] = cum[0:-1:2] + (mp[0:-1:2] + mp[1::2]) * dr / 2.0  # trapezoid fill-in
    mu_w1 = rstar(params, w1)
    values = mu_w1 - (cum[-1] - cum)
    slicing._spline = CubicSpline(grid, values)

    # condition (ii): mu' > 0 and 2 - (1 - 2Mr/rho^2) mu' > 0, all (r, theta)
    r_samp = np.linspace(lo, max(10.0 * M, 2.0 * w1), n_samples)
    th_samp = np.linspace(1e-3, np.pi - 1e-3, n_theta)
    mp_s = slicing.mu_prime(r_samp)
    if np.any(mp_s <= 0.0):
        bad = r_samp[np.argmin(mp_s)]
        raise MuConstructionError(f"mu'(r) <= 0 at r = {bad}")
    rr = r_samp[:, None]
    tt = th_samp[None, :]
    factor = 1.0 - 2.0 * M * rr / params.rho2(rr, tt)
    cond2 = 2.0 - factor * mp_s[:, None]
    if np.any(cond2 <= 0.0):
        i, j = np.unravel_index(np.argmin(cond2), cond2.shape)
        raise MuConstructionError(
            f"spacelike-slice condition violated at (r, theta) = ({r_samp[i]}, {th_samp[j]})"
        )

    # condition (i): mu >= r*_K for r > 2M, equality beyond the window
    r_chk = np.linspace(2.0 * M + 1e-9, 2.0 * w1, 2048)
    gap = slicing.mu(r_chk) - rstar(params, r_chk)
    if np.any(gap < -1e-9):
        bad = r_chk[np.argmin(gap)]
        raise MuConstructionError(f"mu < r*_K at r = {bad}")
    r_eq = np.linspace(2.5 * M, 4.0 * w1, 512)
    eq_err = float(np.max(np.abs(slicing.mu(r_eq) - rstar(params, r_eq))))
    if eq_err > 1e-9:
        raise MuConstructionError(f"mu != r*_K beyond 5M/2 (max error {eq_err})")

    slicing.validation = {
        "min_mu_prime": float(np.min(mp_s)),
        "min_spacelike_margin": float(np.min(cond2)),
        "max_equality_error": eq_err,
        "n_samples": n_samples,
        "n_theta": n_theta,
    }
    return slicing


def stationary_metric(
    params: KerrParams, slicing: TimeSlicing, r, theta, enforce_domain: bool = True
) -> MetricComponents:
    """Covariant metric on the spacelike slicing, azimuth phi_+.

    Components are finite and smooth across r = r_+; index order is
    (ttilde, r, theta, phi_+).  enforce_domain=False admits radii slightly
    below the excision (needed by finite-difference probes of coefficients);
    the chart itself is regular down to the slicing table floor.
    """
    r = np.asarray(r, dtype=float)
    theta = _check_angles(theta)
    if enforce_domain and np.any(r <= params.r_excision):
        raise ValueError("stationary chart queried inside the excised region")
    r, theta = np.broadcast_arrays(r, theta)
    a, M = params.a, params.M
    dlt = params.delta(r)
    rho2 = params.rho2(r, theta)
    s2 = np.sin(theta) ** 2
    mp = slicing.mu_prime(r)
    lapse_factor = 1.0 - 2.0 * M * r / rho2
    entries = {
        (0, 0): -lapse_factor,
        (0, 1): 1.0 - lapse_factor * mp,
        (0, 3): -2.0 * a * M * r * s2 / rho2,
        (1, 1): 2.0 * mp - lapse_factor * mp**2,
        (1, 3): -a * (1.0 + 2.0 * M * r * mp / rho2) * s2,
        (2, 2): rho2,
        (3, 3): ((r**2 + a**2) ** 2 - a**2 * dlt * s2) * s2 / rho2,
    }
    return MetricComponents(_symmetrize_batch(r.shape, entries), "metric", CHART_STATIONARY)


# ---------------------------------------------------------------------------
# blended radial coordinate and azimuth regularization
# ---------------------------------------------------------------------------


@dataclass
class RadialMap:
    """Strictly increasing radial function equal to r inside R, r*_K beyond 2R.

    Between R and 2R the value interpolates through a C^5 polynomial step,
    which keeps both equalities exact and the blended coefficients mild
    enough for clean 4th-order stencils.
    """

    params: KerrParams
    R: float

    def rt(self, r):
        r = np.asarray(r, dtype=float)
        out = np.array(r, dtype=float, copy=True)
        hi = r >= 2.0 * self.R
        mid = (r > self.R) & ~hi
        out[hi] = rstar(self.params, r[hi])
        if np.any(mid):
            q = poly_step((r[mid] - self.R) / self.R)
            out[mid] = (1.0 - q) * r[mid] + q * rstar(self.params, r[mid])
        return out

    def drt(self, r):
        r = np.asarray(r, dtype=float)
        out = np.ones(r.shape, dtype=float)
        hi = r >= 2.0 * self.R
        mid = (r > self.R) & ~hi
        out[hi] = drstar_dr(self.params, r[hi])
        if np.any(mid):
            xi = (r[mid] - self.R) / self.R
            q = poly_step(xi)
            qp = poly_step_prime(xi) / self.R
            rs = rstar(self.params, r[mid])
            out[mid] = (1.0 - q) + q * drstar_dr(self.params, r[mid]) + qp * (rs - r[mid])
        return out

    def inverse(self, rt_target, tol=1e-13, max_iter=60):
        """Invert rt: Newton from a tortoise-aware seed, bisection fallback."""
        rt_target = np.asarray(rt_target, dtype=float)
        scalar = rt_target.ndim == 0
        t = np.atleast_1d(rt_target).astype(float)
        out = t.copy()
        need = t > self.R  # below R the map is the identity
        if np.any(need):
            tn = t[need]
            M = self.params.M
            # seed: undo the logarithmic stretch of the far-field branch
            seed = tn - 2.0 * M * np.log(np.maximum(tn, 3.0 * M))
            seed = np.clip(seed, 0.9 * self.R, None)
            r = seed
            converged = np.zeros(tn.shape, dtype=bool)
            for _ in range(max_iter):
                f = self.rt(r) - tn
                r_new = np.clip(r - f / self.drt(r), 0.5 * self.R, None)
                converged = np.abs(r_new - r) < tol * np.maximum(1.0, np.abs(r_new))
                r = r_new
                if np.all(converged):
                    break
            if not np.all(converged):
                idx = np.where(~converged)[0]
                r[idx] = self._bisect(tn[idx], tol)
            out[need] = r
        return float(out[0]) if scalar else out.reshape(rt_target.shape)

    def _bisect(self, targets, tol):
        lo = np.full(targets.shape, 0.5 * self.R)
        hi = np.maximum(targets + 1.0, 2.0 * self.R + 1.0)
        for _ in range(200):
            short = self.rt(hi) < targets
            if not np.any(short):
                break
            hi[short] *= 1.5
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            left = self.rt(mid) < targets
            lo[left] = mid[left]
            hi[~left] = mid[~left]
            if np.max(hi - lo) < tol:
                break
        return 0.5 * (lo + hi)


def build_radial_map(params: KerrParams, R: float | None = None) -> RadialMap:
    """Build the radial map and verify strict monotonicity on a dense table."""
    if R is None:
        R = 10.0 * params.M
    if R <= max(2.5 * params.M, params.r_plus):
        raise ValueError("R must sit well outside the horizon region")
    rmap = RadialMap(params, R)
    probe = np.linspace(0.5 * params.r_excision, 4.0 * R, 20_001)
    vals = rmap.rt(probe)
    if np.any(np.diff(vals) <= 0.0):
        raise RuntimeError("radial map is not strictly increasing on the probe table")
    if np.any(rmap.drt(probe) <= 0.0):
        raise RuntimeError("radial map derivative is not positive on the probe table")
    return rmap


def phiplus_shift(params: KerrParams, r):
    """Azimuth offset Phi(r) with dPhi = a/Delta dr, normalized to 0 at infinity."""
    r = np.asarray(r, dtype=float)
    a = params.a
    if a == 0.0:
        return np.zeros_like(r)
    rp, rm = params.r_plus, params.r_minus
    return (a / (rp - rm)) * np.log((r - rp) / (r - rm))


# ---------------------------------------------------------------------------
# chart points and the Cartesian-like chart
# ---------------------------------------------------------------------------


@dataclass
class ChartPoint:
    """A point in one named chart; coords is a flat 4-vector.

    Spherical charts store (time, r, theta, azimuth); the Cartesian chart
    stores (time, x1, x2, x3).  Angles are reduced mod 2 pi on construction.
    """

    chart: str
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).copy()
        if self.coords.shape != (4,):
            raise ValueError("coords must be a 4-vector")
        if self.chart in (CHART_BL, CHART_INGOING, CHART_STATIONARY):
            th = self.coords[2]
            if not 0.0 < th < np.pi:
                raise ValueError("theta must lie in (0, pi)")
            self.coords[3] = np.mod(self.coords[3], 2.0 * np.pi)

    def validate_radius(self, r_excision: float):
        if self.chart == CHART_CARTESIAN:
            return
        if self.coords[1] <= r_excision:
            raise ValueError(f"point at r = {self.coords[1]} inside excision r_e = {r_excision}")


def cartesian_chart(params: KerrParams, radial: RadialMap, point: ChartPoint) -> ChartPoint:
    """Map a stationary-chart point (ttilde, r, theta, phitilde) to (ttilde, x)."""
    if point.chart != CHART_STATIONARY:
        raise ValueError("expected a stationary-chart point")
    point.validate_radius(params.r_excision)
    t, r, th, ph = point.coords
    rt = float(radial.rt(r))
    omega = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    return ChartPoint(CHART_CARTESIAN, np.array([t, *(rt * omega)]))


def stationary_from_cartesian(params: KerrParams, radial: RadialMap, point: ChartPoint) -> ChartPoint:
    if point.chart != CHART_CARTESIAN:
        raise ValueError("expected a Cartesian-chart point")
    t = point.coords[0]
    x = point.coords[1:]
    rt = float(np.linalg.norm(x))
    if rt == 0.0:
        raise ValueError("origin is outside every spherical chart")
    r = float(radial.inverse(rt))
    th = float(np.arccos(np.clip(x[2] / rt, -1.0, 1.0)))
    ph = float(np.mod(np.arctan2(x[1], x[0]), 2.0 * np.pi))
    return ChartPoint(CHART_STATIONARY, np.array([t, r, th, ph]))


# ---------------------------------------------------------------------------
# full background bundle and wave-operator coefficients
# ---------------------------------------------------------------------------


@dataclass
class BoxKCoefficients:
    """Pointwise data for the divergence-form wave operator.

    ginv: contravariant metric in the Cartesian-like chart, shape (..., 4, 4)
    sqrtg: sqrt(-det g), shape (...)
    dginv: coordinate derivatives d_alpha ginv, shape (..., 4, 4, 4) with the
        first index the derivative direction (time derivative identically 0)
    dsqrtg: d_alpha sqrtg, shape (..., 4)
    """

    ginv: np.ndarray
    sqrtg: np.ndarray
    dginv: np.ndarray
    dsqrtg: np.ndarray

    def drift(self):
        """First-order coefficient b^beta of box u = g^{ab} d_a d_b u + b^b d_b u."""
        term1 = np.einsum("...aab->...b", self.dginv)
        term2 = np.einsum(
            "...ab,...a->...b", self.ginv, self.dsqrtg / self.sqrtg[..., None]
        )
        return term1 + term2


class KerrGeometry:
    """Bundled background: parameters, slicing, radial map, azimuth cutoff.

    M = 0 is accepted as an exact flat-space mode (identity radial map,
    Minkowski coefficients); it is the reference background for the
    flat-wave tests.
    """

    def __init__(
        self,
        params: KerrParams | None,
        slicing: TimeSlicing | None = None,
        radial: RadialMap | None = None,
        zeta_window: tuple[float, float] | None = None,
        R: float | None = None,
    ):
        self.flat = params is None
        self.params = params
        if self.flat:
            self.slicing = None
            self.radial = None
            self.zeta_window = None
            return
        self.slicing = slicing if slicing is not None else build_mu(params)
        self.radial = radial if radial is not None else build_radial_map(params, R)
        M = params.M
        self.zeta_window = zeta_window if zeta_window is not None else (3.0 * M, 4.0 * M)
        z0, z1 = self.zeta_window
        if not params.r_plus < z0 < z1:
            raise ValueError("azimuth cutoff window must sit outside the horizon")

    @classmethod
    def flat_space(cls) -> "KerrGeometry":
        return cls(None)

    # -- azimuth regularization ---------------------------------------------

    def zeta(self, r):
        """Cutoff: 1 near the horizon (use phi_+), 0 far away (use phi)."""
        z0, z1 = self.zeta_window
        return 1.0 - poly_step((np.asarray(r, dtype=float) - z0) / (z1 - z0))

    def azimuth_mixing(self, r):
        """k(r) in dphi_+ = dphitilde + k dr; regular on the whole domain."""
        r = np.asarray(r, dtype=float)
        if self.params.a == 0.0:
            return np.zeros_like(r)
        z0, z1 = self.zeta_window
        zeta = self.zeta(r)
        out = np.zeros_like(r)
        away = r > z0  # below z0, zeta = 1 and both terms vanish
        if np.any(away):
            ra = r[away]
            dz = -poly_step_prime((ra - z0) / (z1 - z0)) / (z1 - z0)
            out[away] = (1.0 - zeta[away]) * self.params.a / self.params.delta(ra) - dz * phiplus_shift(
                self.params, ra
            )
        return out

    # -- metric in the regularized stationary chart --------------------------

    def stationary_tilde_metric(self, r, theta, enforce_domain: bool = True) -> MetricComponents:
        """Covariant metric in (ttilde, r, theta, phitilde)."""
        base = stationary_metric(self.params, self.slicing, r, theta, enforce_domain)
        k = self.azimuth_mixing(np.asarray(r, dtype=float))
        g = base.g.copy()
        # substitute dphi_+ = dphitilde + k dr  (Jacobian differs from the
        # identity by the single entry dphi_+/dr = k)
        g01 = g[..., 0, 1] + g[..., 0, 3] * k
        g11 = g[..., 1, 1] + 2.0 * g[..., 1, 3] * k + g[..., 3, 3] * k * k
        g13 = g[..., 1, 3] + g[..., 3, 3] * k
        g[..., 0, 1] = g01
        g[..., 1, 0] = g01
        g[..., 1, 1] = g11
        g[..., 1, 3] = g13
        g[..., 3, 1] = g13
        return MetricComponents(g, "metric", CHART_STATIONARY)

    # -- Cartesian-like chart -------------------------------------------------

    def cart_inverse_metric(self, x):
        """Contravariant metric and sqrt(-det g) at Cartesian points x (..., 3)."""
        x = np.asarray(x, dtype=float)
        if self.flat:
            shape = x.shape[:-1]
            ginv = np.broadcast_to(np.diag([-1.0, 1.0, 1.0, 1.0]), shape + (4, 4)).copy()
            return ginv, np.ones(shape)
        rt = np.linalg.norm(x, axis=-1)
        if np.any(rt == 0.0):
            raise ValueError("Cartesian chart is singular at the spatial origin")
        r = self.radial.inverse(rt)
        costh = np.clip(x[..., 2] / rt, -1.0, 1.0)
        th = np.arccos(costh)
        ph = np.arctan2(x[..., 1], x[..., 0])
        g_sph = self.stationary_tilde_metric(r, th, enforce_domain=False).g
        ginv_sph = np.linalg.inv(g_sph)

        sth, cth = np.sin(th), np.cos(th)
        cph, sph = np.cos(ph), np.sin(ph)
        drt = self.radial.drt(r)
        omega = np.stack([sth * cph, sth * sph, cth], axis=-1)
        domega_dth = np.stack([cth * cph, cth * sph, -sth], axis=-1)
        domega_dph = np.stack([-sth * sph, sth * cph, np.zeros_like(sth)], axis=-1)

        # J[mu, alpha] = d x^mu / d y^alpha, y = (t, r, theta, phitilde)
        shape = rt.shape
        J = np.zeros(shape + (4, 4))
        J[..., 0, 0] = 1.0
        J[..., 1:, 1] = drt[..., None] * omega
        J[..., 1:, 2] = rt[..., None] * domega_dth
        J[..., 1:, 3] = rt[..., None] * domega_dph
        ginv = np.einsum("...ma,...ab,...nb->...mn", J, ginv_sph, J)
        ginv = 0.5 * (ginv + np.swapaxes(ginv, -1, -2))
        rho2 = self.params.rho2(r, th)
        sqrtg = rho2 / (drt * rt * rt)
        return ginv, sqrtg

    def cart_metric(self, x):
        ginv, sqrtg = self.cart_inverse_metric(x)
        return np.linalg.inv(ginv), sqrtg

    def boxk_coefficients(self, x, step: float | None = None) -> BoxKCoefficients:
        """Wave-operator coefficient data with 6th-order FD derivatives.

        The background is stationary, so the time derivative slot of dginv
        and dsqrtg is exactly zero; spatial derivatives come from centered
        6th-order differences of the closed-form coefficient evaluation with
        a step scaled to the local radius (truncation well below 1e-8).
        """
        x = np.asarray(x, dtype=float)
        ginv, sqrtg = self.cart_inverse_metric(x)
        shape = x.shape[:-1]
        dginv = np.zeros(shape + (4, 4, 4))
        dsqrtg = np.zeros(shape + (4,))
        if self.flat:
            return BoxKCoefficients(ginv, sqrtg, dginv, dsqrtg)
        rt = np.linalg.norm(x, axis=-1)
        if step is None:
            margin = (rt - 0.9 * self.params.r_excision) / 4.0
            step_arr = np.minimum(2e-3 * np.maximum(rt, self.params.M), margin)
            step_arr = np.maximum(step_arr, 1e-5 * self.params.M)
        else:
            step_arr = np.full(shape, float(step))
        weights = np.array([-1.0, 9.0, -45.0, 45.0, -9.0, 1.0]) / 60.0
        offsets = np.array([-3, -2, -1, 1, 2, 3])
        for i in range(3):
            acc_g = np.zeros(shape + (4, 4))
            acc_s = np.zeros(shape)
            for w, o in zip(weights, offsets):
                xs = x.copy()
                xs[..., i] = xs[..., i] + o * step_arr
                gi, si = self.cart_inverse_metric(xs)
                acc_g += w * gi
                acc_s += w * si
            dginv[..., i + 1, :, :] = acc_g / step_arr[..., None, None]
            dsqrtg[..., i + 1] = acc_s / step_arr
        return BoxKCoefficients(ginv, sqrtg, dginv, dsqrtg)


# ---------------------------------------------------------------------------
# symbol-class decay check
# ---------------------------------------------------------------------------


@dataclass
class SymbolDecayReport:
    claimed_exponent: float
    fitted_slope: float
    constant: float
    radii: np.ndarray
    values: np.ndarray
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "claimed_exponent": self.claimed_exponent,
            "fitted_slope": self.fitted_slope,
            "constant": self.constant,
            "radii": [float(v) for v in self.radii],
            "values": [float(v) for v in self.values],
            "passed": bool(self.passed),
            "note": self.note,
        }


def symbol_class_check(
    quantity: Callable[[float], float],
    claimed_exponent: float,
    r0: float = 10.0,
    n_doublings: int = 10,
    slope_slack: float = 0.1,
    noise_floor: float = 1e-12,
) -> SymbolDecayReport:
    """Fit |quantity(r)| ~ C r^k on a dyadic radial ladder r = 2^j r0.

    quantity(r) should return the worst-case magnitude over whatever angle
    set the caller samples.  Pass criterion: fitted log-log slope at most
    claimed_exponent + slope_slack.  Quantities that vanish identically (up
    to the noise floor, relative to the largest sample) pass any exponent.
    A violation is reported, not raised.
    """
    radii = r0 * 2.0 ** np.arange(n_doublings + 1)
    values = np.array([abs(float(quantity(r))) for r in radii])
    peak = float(np.max(values))
    if peak < noise_floor:
        return SymbolDecayReport(
            claimed_exponent, -np.inf, 0.0, radii, values, True, "identically zero"
        )
    mask = values > noise_floor * peak
    if np.count_nonzero(mask) < 3:
        return SymbolDecayReport(
            claimed_exponent, -np.inf, 0.0, radii, values, True,
            "vanishes at all but isolated samples",
        )
    slope, logc = np.polyfit(np.log(radii[mask]), np.log(values[mask]), 1)
    passed = bool(slope <= claimed_exponent + slope_slack)
    note = "" if passed else (
        f"fitted slope {slope:.3f} exceeds claimed {claimed_exponent} + {slope_slack}"
    )
    return SymbolDecayReport(
        claimed_exponent, float(slope), float(np.exp(logc)), radii, values, passed, note
    )
