"""Norms, regions, inequality checks and decay fits on recorded runs.

Everything here consumes RunData snapshots from the radial evolution mode:
fields phi(t, 10, N) and pi on a uniform radial grid at a fixed cadence.
Rotations annihilate the spherically symmetric data, so vector-field
families reduce to translations and the scaling field, with second time
derivatives reconstructed from the field equation rather than stored
history.  Space-time integrals use the coordinate measure dt 4 pi rt^2 drt
with trapezoid weights in time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .evolution import FieldState, RunData, SphericalEvolver
from .fields import TANGENTIAL_PAIRS, frame_vectors, contract
from .profiles import window_bump
from .stencils import diff1, diff2

__all__ = [
    "DyadicRegion",
    "NormSeries",
    "DecayFit",
    "RadialRun",
    "trapped_set_cutoff",
    "annulus_index",
    "le_norm",
    "weighted_linf_table",
    "energy_series",
    "composite_energy",
    "sobolev_embedding_check",
    "ks_inequality_check",
    "smallr_le_check",
    "region_l2_derivative_check",
    "transversal_derivative_check",
    "decay_fit",
    "window_sup_series",
]

DELTA_DEFAULT = 0.1  # near-cone weight exponent offset
DELTA1_DEFAULT = 0.1  # extra time-cone weight in the composite energy
R1_DEFAULT = 10.0  # start of the far region in the composite energy


def bracket(x):
    """Japanese bracket <x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2)


def trapped_set_cutoff(rt, M: float = 1.0):
    """Smooth cutoff equal to 1 around the photon sphere (r ~ 3M).

    Plateau on [2.5M, 3.5M], supported in [2M, 4M].  The small-spin trapped
    set stays near the zero-spin photon sphere, so no spin dependence is
    attempted; the window is echoed in run manifests.
    """
    return window_bump(np.asarray(rt, dtype=float), 2.0 * M, 2.5 * M, 3.5 * M, 4.0 * M)


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DyadicRegion:
    """Space-time region from the double dyadic decomposition of a slab.

    kinds: "slab" (T <= t <= 2T, rt <= t), "slab_r" (its radius band),
    "slab_u" (its cone-distance band), "annulus" (spatial A_R), and the
    scaling-enlarged "slab_r_wide" / "slab_u_wide" variants, whose time-
    ratio bounds contain every scaling-flow segment of the base region.
    """

    kind: str
    T: float = 0.0
    R: float = 0.0
    U: float = 0.0

    def mask(self, t, rt):
        t = np.asarray(t, dtype=float)
        rt = np.asarray(rt, dtype=float)
        T, R, U = self.T, self.R, self.U
        if self.kind == "annulus":
            b = bracket(rt)
            if R <= 1.0:
                return b < 2.0
            return (b >= R) & (b < 2.0 * R)
        slab = (t >= T) & (t <= 2.0 * T)
        cone = rt <= t
        if self.kind == "slab":
            return slab & cone
        if self.kind == "slab_r":
            if R <= 1.0:
                return slab & cone & (rt < 2.0)
            return slab & cone & (rt > R) & (rt < 2.0 * R)
        if self.kind == "slab_u":
            q = t - rt
            if U <= 1.0:
                return slab & cone & (q > 0.0) & (q < 2.0)
            return slab & cone & (q > U) & (q < 2.0 * U)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rt > 0.0, t / rt, np.inf)
        if self.kind == "slab_r_wide":
            lo = 0.8 * T / (2.0 * R)
            hi = 1.2 * 2.0 * T / R
            return slab & (ratio >= lo) & (ratio <= hi)
        if self.kind == "slab_u_wide":
            lo = 0.8 * T / (T - 2.0 * U)
            hi = 1.2 * 2.0 * T / (2.0 * T - U)
            return slab & (ratio >= lo) & (ratio <= hi)
        raise ValueError(f"unknown region kind {self.kind!r}")

    def contains_scaling_orbits(self, t_samples, rt_samples, n_scale: int = 9) -> bool:
        """Check the defining enlargement property on sample points."""
        base = DyadicRegion(self.kind.replace("_wide", ""), self.T, self.R, self.U)
        wide = self
        t = np.asarray(t_samples, dtype=float)
        rt = np.asarray(rt_samples, dtype=float)
        inside = base.mask(t, rt)
        ok = True
        for s in np.linspace(0.55, 1.9, n_scale):
            ts, rs = s * t, s * rt
            valid = inside & (ts >= self.T) & (ts <= 2.0 * self.T)
            if np.any(valid):
                ok = ok and bool(np.all(wide.mask(ts, rs)[valid]))
        return ok


def annulus_index(r_max: float):
    """Dyadic annulus scales 1, 2, 4, ... covering radii up to r_max."""
    out = [1.0]
    while out[-1] < r_max:
        out.append(2.0 * out[-1])
    return out


# ---------------------------------------------------------------------------
# run access helpers
# ---------------------------------------------------------------------------


class RadialRun:
    """Derived fields over a recorded radial run.

    Provides first and second space derivatives, equation-reconstructed
    second time derivatives, scaling-field applications, and the constant
    null-frame contractions along the sampling ray.
    """

    def __init__(self, run: RunData, evolver: SphericalEvolver):
        self.run = run
        self.ev = evolver
        self.t = run.t
        self.rt = run.rt
        self.h = run.h
        self.frame = frame_vectors(np.array([1.0, 0.0, 0.0]))

    def snapshot(self, k: int) -> FieldState:
        return FieldState(self.run.phi[k], self.run.pi[k], float(self.t[k]))

    def window_indices(self, t0: float, t1: float):
        return np.where((self.t >= t0 - 1e-9) & (self.t <= t1 + 1e-9))[0]

    def dr(self, u):
        return diff1(u, self.h, axis=-1, order=self.ev.spec.order)

    def d2r(self, u):
        return diff2(u, self.h, axis=-1, order=self.ev.spec.order)

    def pi_dot(self, k: int):
        return self.ev.pi_time_derivative(float(self.t[k]), self.run.phi[k], self.run.pi[k])

    def grad_mag(self, k: int, comp=None):
        """|du| = sqrt(pi^2 + (d_rt u)^2), per component or aggregated."""
        phi, pi = self.run.phi[k], self.run.pi[k]
        du = np.sqrt(pi**2 + self.dr(phi) ** 2)
        if comp is None:
            return np.sqrt(np.sum(du**2, axis=0))
        return du[comp]

    def scaling(self, k: int, comp: int = 0):
        """S u = t pi + rt d_rt u for one component."""
        u = self.run.phi[k, comp]
        pi = self.run.pi[k, comp]
        return float(self.t[k]) * pi + self.rt * self.dr(u)

    def scaling_sq(self, k: int, comp: int = 0):
        """S^2 u reconstructed with the equation for the d_t^2 piece."""
        tt = float(self.t[k])
        u = self.run.phi[k, comp]
        pi = self.run.pi[k, comp]
        pdot = self.pi_dot(k)[comp]
        up = self.dr(u)
        upp = self.d2r(u)
        pip = self.dr(pi)
        return tt * pi + tt * tt * pdot + 2.0 * tt * self.rt * pip + self.rt * up + self.rt**2 * upp

    def scaling_of_grad(self, k: int, comp: int = 0):
        """S applied to (pi, d_rt u): magnitude of the scaled gradient pair."""
        tt = float(self.t[k])
        u = self.run.phi[k, comp]
        pi = self.run.pi[k, comp]
        pdot = self.pi_dot(k)[comp]
        s_pi = tt * pdot + self.rt * self.dr(pi)
        s_up = tt * self.dr(pi) + self.rt * self.d2r(u)
        return np.sqrt(s_pi**2 + s_up**2)

    def second_grad_mag(self, k: int, comp: int = 0):
        """|d^2 u| with the Cartesian angular pieces of radial fields."""
        u = self.run.phi[k, comp]
        pi = self.run.pi[k, comp]
        pdot = self.pi_dot(k)[comp]
        up = self.dr(u)
        upp = self.d2r(u)
        pip = self.dr(pi)
        rt = np.maximum(self.rt, 1e-10)
        spatial_sq = upp**2 + 2.0 * (up / rt) ** 2
        return np.sqrt(pdot**2 + 2.0 * pip**2 + spatial_sq)

    def box_flat(self, k: int, comp: int = 0):
        """Flat-space wave operator measured on the run data."""
        u = self.run.phi[k, comp]
        pdot = self.pi_dot(k)[comp]
        rt = np.maximum(self.rt, 1e-10)
        return -pdot + self.d2r(u) + 2.0 * self.dr(u) / rt

    def source_mag(self, k: int, comp: int = 0):
        """|box_K u| on the run: the equation's right side (0 when linear)."""
        if self.ev._prepared_source is None:
            return np.zeros_like(self.rt)
        from .semilinear import evaluate_rhs

        grads = self.ev.gradients(self.run.phi[k], self.run.pi[k])
        F = evaluate_rhs(
            self.ev._prepared_source,
            grads,
            x=self.ev.axis_points,
            t=float(self.t[k]),
            frame=self.frame,
        )
        return np.abs(F[comp])

    def contraction(self, k: int, pair: tuple[str, str]):
        va, vb = self.frame[pair[0]], self.frame[pair[1]]
        return contract(self.run.phi[k], va, vb), contract(self.run.pi[k], va, vb)

    def tangential_pairs_dv(self, k: int):
        """d_v of every tangential contraction, stacked (npairs, N)."""
        out = []
        for pair in TANGENTIAL_PAIRS:
            cphi, cpi = self.contraction(k, pair)
            out.append(cpi + self.dr(cphi))
        return np.stack(out)

    def spacetime_weights(self, idx):
        """Trapezoid-in-time, coordinate-volume weights for a window."""
        wt = np.ones(len(idx))
        if len(idx) > 1:
            wt[0] = wt[-1] = 0.5
        dt = self.t[1] - self.t[0] if len(self.t) > 1 else 1.0
        vol = 4.0 * np.pi * self.rt**2 * self.h
        return wt * dt, vol


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def _window_l2(rad: RadialRun, values_fn, idx, mask_fn=None) -> float:
    """L2 over a time window with optional per-snapshot spatial masks."""
    wt, vol = rad.spacetime_weights(idx)
    total = 0.0
    for w, k in zip(wt, idx):
        vals = values_fn(k)
        if mask_fn is not None:
            m = mask_fn(float(rad.t[k]))
            if not np.any(m):
                continue
            total += w * float(np.sum(vals[m] ** 2 * vol[m]))
        else:
            total += w * float(np.sum(vals**2 * vol))
    return np.sqrt(total)


def le_norm(
    rad: RadialRun,
    window: tuple[float, float],
    variant: str = "LE",
    comp: int | None = None,
    values_fn: Callable | None = None,
) -> float:
    """Local-energy norms over a time window.

    LE: sup over dyadic annuli of || <r>^-1/2 u ||_L2;  LE* uses the sum
    and the +1/2 weight.  LE1 adds the gradient and <r>^-1 u pieces; the
    weak variants degenerate at the trapped set through the photon-sphere
    cutoff, and LE*_w minimizes over explicit splittings f = f1 + f2 of
    ||f1||_L1L2 + ||(1-chi) f2||_LE* (all-one-piece, the cutoff split, and
    a scalar scan), which upper-bounds the true infimum.
    """
    idx = rad.window_indices(*window)
    if len(idx) < 2:
        raise ValueError("window must span at least two snapshots")
    b = bracket(rad.rt)

    def comp_vals(k):
        if values_fn is not None:
            return values_fn(k)
        if comp is None:
            return np.sqrt(np.sum(rad.run.phi[k] ** 2, axis=0))
        return rad.run.phi[k, comp]

    scales = annulus_index(float(rad.rt[-1]))

    def banded(weight_exp, vals_fn):
        out = []
        for R in scales:
            reg = DyadicRegion("annulus", R=R)
            m = reg.mask(0.0, rad.rt)
            if not np.any(m):
                out.append(0.0)
                continue
            out.append(
                _window_l2(rad, lambda k: vals_fn(k) * b**weight_exp, idx, lambda tt: m)
            )
        return np.array(out)

    if variant == "LE":
        return float(np.max(banded(-0.5, comp_vals)))
    if variant == "LE*":
        return float(np.sum(banded(0.5, comp_vals)))
    if variant in ("LE1", "LE1_w"):
        grad = lambda k: rad.grad_mag(k, comp)
        low = lambda k: comp_vals(k) / b
        if variant == "LE1":
            return float(np.max(banded(-0.5, grad)) + np.max(banded(-0.5, low)))
        chi = trapped_set_cutoff(rad.rt)
        grad_w = lambda k: (1.0 - chi) * rad.grad_mag(k, comp)
        radial_only = lambda k: np.abs(
            rad.dr(rad.run.phi[k, comp] if comp is not None else rad.run.phi[k]).reshape(-1, len(rad.rt)).max(axis=0)
            if comp is None
            else rad.dr(rad.run.phi[k, comp])
        )
        return float(
            np.max(banded(-0.5, grad_w))
            + np.max(banded(-0.5, radial_only))
            + np.max(banded(-0.5, low))
        )
    if variant == "LE*_w":
        chi = trapped_set_cutoff(rad.rt)
        # candidate 1: everything in L1 L2
        wt, vol = rad.spacetime_weights(idx)
        l1l2 = sum(
            w * np.sqrt(float(np.sum(comp_vals(k) ** 2 * vol))) for w, k in zip(wt, idx)
        )
        # candidate 2: everything in the degenerate LE* piece
        lestar = float(np.sum(banded(0.5, lambda k: (1.0 - chi) * comp_vals(k))))
        # candidate 3: cutoff split f1 = chi f, f2 = (1 - chi) f
        l1l2_cut = sum(
            w * np.sqrt(float(np.sum((chi * comp_vals(k)) ** 2 * vol)))
            for w, k in zip(wt, idx)
        )
        lestar_cut = float(
            np.sum(banded(0.5, lambda k: (1.0 - chi) ** 2 * comp_vals(k)))
        )
        best = min(l1l2, lestar, l1l2_cut + lestar_cut)
        # candidate 4: scalar convex scan (linear, but scanned as specified)
        for lam in np.linspace(0.0, 1.0, 11):
            best = min(best, lam * l1l2 + (1.0 - lam) * lestar)
        return float(best)
    raise ValueError(f"unknown variant {variant!r}")


def weighted_linf_table(H, t, r, beta, gamma, eta) -> float:
    """sup over the (t, r) table of <r>^beta <t>^gamma <t-r>^eta H."""
    H = np.asarray(H, dtype=float)
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    T, Rr = np.meshgrid(t, r, indexing="ij")
    w = bracket(Rr) ** beta * bracket(T) ** gamma * bracket(T - Rr) ** eta
    return float(np.max(w * H))


def energy_series(rad: RadialRun):
    vals = [rad.ev.energy(rad.snapshot(k)) for k in range(rad.run.n_snapshots)]
    return rad.t.copy(), np.array(vals)


def composite_energy(
    rad: RadialRun,
    T: float,
    comp: int = 0,
    delta1: float = DELTA1_DEFAULT,
    R1: float = R1_DEFAULT,
) -> dict:
    """Desk-scale composite energy over [0, T] at family depth <= 2.

    sup-in-time of the slice energy of the derivative family, plus the weak
    local-energy norm, plus the cone-weighted tangential-derivative L2 in
    the far region.  Depth-2 families hold plain derivatives only (the
    rotation and scaling slots carry weight 3).
    """
    idx = rad.window_indices(0.0, T)
    sup_e = 0.0
    for k in idx:
        st = rad.snapshot(k)
        sup_e = max(sup_e, rad.ev.energy(st))
        dstate = FieldState(st.pi, np.stack([rad.pi_dot(k)[c] for c in range(10)]), st.t)
        sup_e = max(sup_e, rad.ev.energy(dstate))
    le1w = le_norm(rad, (0.0, T), "LE1_w", comp=comp)

    far = rad.rt >= R1

    def tang(k):
        cphi = rad.run.phi[k, comp]
        cpi = rad.run.pi[k, comp]
        dv = cpi + rad.dr(cphi)
        q = float(rad.t[k]) - rad.rt
        return np.abs(dv) * bracket(q) ** (-(1.0 + delta1) / 2.0)

    cone_term = _window_l2(rad, tang, idx, lambda tt: far)
    return {
        "sup_energy": sup_e,
        "le1_weak": le1w,
        "cone_weighted_tangential": cone_term,
        "total": sup_e + le1w + cone_term,
        "delta1": delta1,
        "R1": R1,
    }


# ---------------------------------------------------------------------------
# inequality checks
# ---------------------------------------------------------------------------


def sobolev_embedding_check(
    rad: RadialRun, T: float, R: float = 0.0, U: float = 0.0, comp: int = 0
) -> dict:
    """Region Sobolev embedding: sup bounded by scaled L2 of the family.

    For the radius band the right side is T^-1/2 R^-3/2 sum ||S^i w|| +
    T^-1/2 R^-1/2 sum ||S^i d w|| (rotation slots vanish on radial data);
    the cone-distance band uses T^-3/2 U^-1/2 and T^-3/2 U^1/2.  Returns
    the ratio RHS / LHS, which the embedding bounds below by 1/C.
    """
    kind = "slab_r" if R else "slab_u"
    reg = DyadicRegion(kind, T=T, R=R, U=U)
    idx = rad.window_indices(T, 2.0 * T)
    if len(idx) < 2:
        raise ValueError("empty region window")

    sup = 0.0
    for k in idx:
        m = reg.mask(float(rad.t[k]), rad.rt)
        if np.any(m):
            sup = max(sup, float(np.max(np.abs(rad.run.phi[k, comp][m]))))
    if sup == 0.0:
        return {"ratio": np.inf, "lhs": 0.0, "vacuous": True}

    def l2(fn):
        return _window_l2(rad, fn, idx, lambda tt: reg.mask(tt, rad.rt))

    base = l2(lambda k: rad.run.phi[k, comp]) + l2(lambda k: rad.scaling(k, comp))
    grad = l2(lambda k: rad.grad_mag(k, comp)) + l2(lambda k: rad.scaling_of_grad(k, comp))
    scale = max(R, 1.0) if kind == "slab_r" else max(U, 1.0)
    if kind == "slab_r":
        rhs = base / (np.sqrt(T) * scale**1.5) + grad / (np.sqrt(T) * np.sqrt(scale))
    else:
        rhs = base / (T**1.5 * np.sqrt(scale)) + grad * np.sqrt(scale) / T**1.5
    return {"ratio": rhs / sup, "lhs": sup, "rhs": rhs, "vacuous": False}


def ks_inequality_check(rad: RadialRun, window: tuple[float, float], r_min: float, comp: int = 0) -> dict:
    """Two-derivative pointwise bound in the far region.

    sup over sampled points of |d^2 w| divided by
    t/(r <t-rt>) * sum |d S^i w| + t/<t-rt> |box_K w|, with the wave
    operator measured from the run (zero up to solver error on linear
    runs).  Finite, refinement-stable ratios are the pass condition.
    """
    idx = rad.window_indices(*window)
    worst = 0.0
    for k in idx:
        tt = float(rad.t[k])
        m = rad.rt >= r_min
        if not np.any(m):
            continue
        lhs = rad.second_grad_mag(k, comp)
        fam = rad.grad_mag(k, comp) + rad.scaling_of_grad(k, comp)
        q = bracket(tt - rad.rt)
        rhs = tt / (np.maximum(rad.rt, 1e-10) * q) * fam
        # box_K u equals the equation's source on the run (zero when linear)
        box_term = tt / q * rad.source_mag(k, comp)
        denom = rhs + box_term
        good = m & (denom > 1e-14)
        if np.any(good):
            worst = max(worst, float(np.max(lhs[good] / denom[good])))
    return {"sup_ratio": worst, "r_min": r_min}


def smallr_le_check(
    rad: RadialRun, T: float, comp: int = 0, extra_depths: Sequence[int] = (0, 1)
) -> dict:
    """Interior local-energy gain: LE1 of u inside rt <= t/2 against
    T^-1 LE1 of <r> u at higher depth plus LE* of the wave operator.

    Depths index scaling applications (the only nonvanishing heavy family
    members on radial data); one ratio is reported per depth.
    """
    idx = rad.window_indices(T, 2.0 * T)
    interior = lambda tt: rad.rt <= tt / 2.0
    b = bracket(rad.rt)

    def le1_interior(vals_grad, vals_low):
        g = _window_l2(rad, lambda k: vals_grad(k) / np.sqrt(b), idx, interior)
        lo = _window_l2(rad, lambda k: vals_low(k) / (b * np.sqrt(b)), idx, interior)
        return g + lo

    lhs = le1_interior(lambda k: rad.grad_mag(k, comp), lambda k: rad.run.phi[k, comp])
    out = {"T": T, "lhs": lhs, "ratios": {}}
    for n in extra_depths:
        if n == 0:
            gfn = lambda k: b * rad.grad_mag(k, comp)
            lfn = lambda k: b * rad.run.phi[k, comp]
        else:
            gfn = lambda k: b * rad.scaling_of_grad(k, comp)
            lfn = lambda k: b * rad.scaling(k, comp)
        rhs = le1_interior(gfn, lfn) / T
        box = _window_l2(rad, lambda k: rad.source_mag(k, comp) * np.sqrt(b), idx, interior)
        total = rhs + box
        out["ratios"][n] = lhs / total if total > 0 else np.inf
    return out


def region_l2_derivative_check(
    rad: RadialRun, T: float, R: float = 0.0, U: float = 0.0, comp: int = 0
) -> dict:
    """Derivative L2 on a dyadic band against the scaled enlarged-band data.

    Radius version: ||dw||_L2(band) <= C [ R^-1 ||w|| + T^-1 (||Sw|| +
    ||S^2 w||) + R ||box w|| ] over the scaling enlargement; cone-distance
    version uses U^-1 (||w|| + ||Sw|| + ||S^2w||) + T ||box w||.  Returns
    the measured constant; skips with a notice when the enlargement leaves
    the grid.
    """
    kind = "slab_r" if R else "slab_u"
    base = DyadicRegion(kind, T=T, R=R, U=U)
    wide = DyadicRegion(kind + "_wide", T=T, R=R, U=U)
    idx = rad.window_indices(T, 2.0 * T)

    # enlarged-region radial reach check
    need = []
    for k in idx:
        m = wide.mask(float(rad.t[k]), rad.rt)
        need.append(np.any(m))
    if not any(need):
        return {"skipped": True, "reason": "enlarged region outside the grid"}

    lhs = _window_l2(rad, lambda k: rad.grad_mag(k, comp), idx,
                     lambda tt: base.mask(tt, rad.rt))
    in_wide = lambda tt: wide.mask(tt, rad.rt)
    w0 = _window_l2(rad, lambda k: rad.run.phi[k, comp], idx, in_wide)
    w1 = _window_l2(rad, lambda k: rad.scaling(k, comp), idx, in_wide)
    w2 = _window_l2(rad, lambda k: rad.scaling_sq(k, comp), idx, in_wide)
    box = 0.0  # the run solves the equation; source-free linear data
    if kind == "slab_r":
        rhs = w0 / max(R, 1.0) + (w1 + w2) / T + max(R, 1.0) * box
    else:
        rhs = (w0 + w1 + w2) / max(U, 1.0) + T * box
    return {
        "skipped": False,
        "lhs": lhs,
        "rhs": rhs,
        "constant": lhs / rhs if rhs > 0 else np.inf,
        "kind": kind,
    }


def transversal_derivative_check(
    rad: RadialRun,
    t_eval: float,
    q_values: Sequence[float],
    delta: float = DELTA_DEFAULT,
    comp: int = 0,
) -> dict:
    """Weighted transversal-derivative bound along outgoing flow lines.

    In the exterior wedge 0 <= t - rt <= t/4 the weighted derivative
    t |d phi| w(q) is bounded by sup and integral terms gathered along the
    line rt = tau - q from tau = 4q to t; w(q) = <q>^(1-delta).  The sup
    of measured-LHS over assembled-RHS across the q samples is returned.
    """
    worst = 0.0
    details = []
    for q in q_values:
        if not 0.0 <= q <= t_eval / 4.0:
            continue
        w = float(bracket(q) ** (1.0 - delta))
        taus = rad.t[(rad.t >= 4.0 * q) & (rad.t <= t_eval)]
        if len(taus) < 2:
            continue

        def at(tau, values):
            return float(np.interp(tau - q, rad.rt, values))

        sup_term = 0.0
        integrand = []
        for tau in taus:
            k = int(np.argmin(np.abs(rad.t - tau)))
            grad = rad.grad_mag(k, comp)
            u = rad.run.phi[k, comp]
            su = rad.scaling(k, comp)
            sup_term = max(
                sup_term,
                q * at(tau, grad) * w,
                at(tau, np.abs(u)) * w,
                at(tau, np.abs(su)) * w / max(tau, 1.0),
            )
            f = rad.box_flat(k, comp)
            second = rad.second_grad_mag(k, comp)
            integrand.append(
                bracket(tau) * at(tau, np.abs(f)) * w
                + (at(tau, np.abs(u)) + at(tau, grad) + at(tau, second)) * w / bracket(tau)
            )
        integral = float(np.trapezoid(integrand, taus))
        rhs = sup_term + integral
        k_t = int(np.argmin(np.abs(rad.t - t_eval)))
        lhs = t_eval * at(t_eval, rad.grad_mag(k_t, comp)) * w
        ratio = lhs / rhs if rhs > 0 else 0.0
        details.append({"q": q, "lhs": lhs, "rhs": rhs, "ratio": ratio})
        worst = max(worst, ratio)
    return {"sup_ratio": worst, "bands": details, "delta": delta}


# ---------------------------------------------------------------------------
# decay fits
# ---------------------------------------------------------------------------


@dataclass
class NormSeries:
    """Named time series of norm values with CSV export."""

    times: np.ndarray
    values: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def to_csv(self, path: str):
        names = sorted(self.values)
        with open(path, "w") as fh:
            fh.write("t," + ",".join(names) + "\n")
            for i, t in enumerate(self.times):
                row = ",".join(f"{self.values[n][i]:.17g}" for n in names)
                fh.write(f"{t:.17g},{row}\n")


@dataclass
class DecayFit:
    region: str
    component: str
    exponent: float
    constant: float
    residual: float
    windows: list

    def to_dict(self):
        return {
            "region": self.region,
            "component": self.component,
            "exponent": self.exponent,
            "constant": self.constant,
            "residual": self.residual,
            "windows": self.windows,
        }

    def to_json(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def decay_fit(window_values: dict[float, float], region: str = "", component: str = "") -> DecayFit:
    """Log-log regression of per-window sup values against the window start.

    Requires at least four dyadic windows; the residual is the max absolute
    log-deviation from the fitted line (a drifting exponent, e.g. a hidden
    logarithm, shows up there).
    """
    Ts = np.array(sorted(window_values))
    if len(Ts) < 4:
        raise ValueError("need at least four dyadic windows for a decay fit")
    vals = np.array([window_values[T] for T in Ts])
    if np.any(vals <= 0.0):
        if np.all(vals <= 1e-300):
            return DecayFit(region, component, 0.0, 0.0, 0.0, list(map(float, Ts)))
        vals = np.maximum(vals, 1e-300)
    slope, logc = np.polyfit(np.log(Ts), np.log(vals), 1)
    resid = float(np.max(np.abs(np.log(vals) - (slope * np.log(Ts) + logc))))
    return DecayFit(region, component, float(slope), float(np.exp(logc)), resid, list(map(float, Ts)))


def window_sup_series(
    rad: RadialRun,
    windows: Sequence[float],
    delta: float = DELTA_DEFAULT,
    q_band: float = 16.0,
) -> dict[str, dict[float, float]]:
    """Per-window sup quantities feeding the decay fits.

    interior_sup: sup of |phi| over rt <= t/2 (all components).
    cone_full_grad: sup over the near-cone band 0 <= t - rt <= q_band of
        <t-rt>^(1-delta) rt |d phi| with the full gradient of every
        component -- dominated by the transversal derivative.
    cone_good_tangential: the same band and weight on the tangential
        derivative of the tangential-frame contractions, the family the
        structural coupling privileges.
    """
    out = {"interior_sup": {}, "cone_full_grad": {}, "cone_good_tangential": {}}
    for T in windows:
        idx = rad.window_indices(T, 2.0 * T)
        if len(idx) == 0:
            continue
        v_int, v_full, v_good = 0.0, 0.0, 0.0
        for k in idx:
            tt = float(rad.t[k])
            q = tt - rad.rt
            m_int = rad.rt <= tt / 2.0
            if np.any(m_int):
                v_int = max(v_int, float(np.max(np.abs(rad.run.phi[k][:, m_int]))))
            m_cone = (q >= 0.0) & (q <= q_band)
            if np.any(m_cone):
                wgt = bracket(q[m_cone]) ** (1.0 - delta) * rad.rt[m_cone]
                grad = rad.grad_mag(k)[m_cone]
                v_full = max(v_full, float(np.max(wgt * grad)))
                dv = rad.tangential_pairs_dv(k)[:, m_cone]
                v_good = max(v_good, float(np.max(wgt * np.max(np.abs(dv), axis=0))))
        out["interior_sup"][T] = v_int
        out["cone_full_grad"][T] = v_full
        out["cone_good_tangential"][T] = v_good
    return out
