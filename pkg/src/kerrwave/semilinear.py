"""Quadratic gradient couplings for the 10-component tensor wave system.

The right side of the evolution equations is

    F_mn = P^{abcd}(x/t) d_m phi_ab d_n phi_cd + Q_mn[d phi, d phi]

where P is indexed in the null frame {Lb, L, e2, e3} with the transversal
double slot structurally removed (no entry may carry (Lb, Lb) as its first
or second pair), and each Q_mn is a classical null form.  Both pieces are
bilinear in gradients, so the output scales quadratically and stays
symmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import FRAME_LABELS, SYM10_PAIRS, TANGENTIAL_PAIRS, frame_matrix, frame_vectors

__all__ = [
    "CouplingCoefficients",
    "NullFormTerm",
    "NullFormSelection",
    "SemilinearSource",
    "NullBoundReport",
    "evaluate_rhs",
    "weak_null_check",
    "null_bound_check",
    "rhs_structure_split",
    "make_preset",
    "PRESETS",
]

_LABEL_SET = frozenset(FRAME_LABELS)
MINKOWSKI_SIGN = np.array([-1.0, 1.0, 1.0, 1.0])


class CouplingCoefficients:
    """Frame-indexed coefficients of the gradient-squared coupling.

    entries maps 4-tuples of frame labels to constants.  Tuples whose first
    or second pair is (Lb, Lb) are rejected at construction: the bad slots
    do not exist in this representation, which is the structural form of
    the weak null condition.  An optional bounded modulation c(x, t)
    multiplies every entry (it must be smooth and O(1); the default setup
    keeps coefficients constant).
    """

    def __init__(self, entries: dict[tuple, float], modulation: Callable | None = None):
        clean = {}
        for key, val in entries.items():
            key = tuple(key)
            if len(key) != 4 or any(lab not in _LABEL_SET for lab in key):
                raise ValueError(f"bad frame tuple {key!r}")
            if key[0] == key[1] == "Lb" or key[2] == key[3] == "Lb":
                raise ValueError(
                    f"entry {key!r} has a transversal double slot; such couplings "
                    "are structurally excluded"
                )
            if val != 0.0:
                clean[key] = float(val)
        self.entries = clean
        self.modulation = modulation

    def pairs_needed(self) -> list[tuple[str, str]]:
        seen = []
        for key in self.entries:
            for pair in (key[:2], key[2:]):
                if pair not in seen:
                    seen.append(pair)
        return seen

    def cartesian(self, x) -> np.ndarray:
        """Assemble P^{abcd} at Cartesian points x (..., 3) -> (..., 4,4,4,4)."""
        fr = frame_vectors(np.asarray(x, dtype=float))
        shape = np.asarray(x).shape[:-1]
        out = np.zeros(shape + (4, 4, 4, 4))
        for (A, B, C, D), c in self.entries.items():
            out += c * np.einsum(
                "...a,...b,...c,...d->...abcd", fr[A], fr[B], fr[C], fr[D]
            )
        return out

    def bounded_by(self) -> float:
        return sum(abs(v) for v in self.entries.values())


@dataclass(frozen=True)
class NullFormTerm:
    """One null-form contribution to a single output slot.

    kind "q0" is the Minkowski form m^{ab} d_a u d_b v; kind "qab" is the
    antisymmetric form d_a u d_b v - d_b u d_a v for the stored (a, b).
    comp_a / comp_b index the 10 tensor components supplying u and v.
    """

    coeff: float
    kind: str
    comp_a: int
    comp_b: int
    axes: tuple[int, int] = (0, 1)

    def __post_init__(self):
        if self.kind not in ("q0", "qab"):
            raise ValueError(f"unknown null form kind {self.kind!r}")
        if not (0 <= self.comp_a < 10 and 0 <= self.comp_b < 10):
            raise ValueError("component indices must address the 10 slots")

    def evaluate(self, grads: np.ndarray) -> np.ndarray:
        ga = grads[self.comp_a]
        gb = grads[self.comp_b]
        if self.kind == "q0":
            val = sum(MINKOWSKI_SIGN[m] * ga[m] * gb[m] for m in range(4))
        else:
            a, b = self.axes
            val = ga[a] * gb[b] - ga[b] * gb[a]
        return self.coeff * val


class NullFormSelection:
    """Per-slot lists of null-form terms (slot index follows SYM10_PAIRS)."""

    def __init__(self, terms: dict[int, Sequence[NullFormTerm]]):
        self.terms = {int(k): list(v) for k, v in terms.items()}
        for k in self.terms:
            if not 0 <= k < 10:
                raise ValueError("slot index out of range")

    @classmethod
    def diagonal_q0(cls, coeff: float = 1.0) -> "NullFormSelection":
        """Q_mn = coeff * Q0(phi_mn, phi_mn) on every slot."""
        return cls({k: [NullFormTerm(coeff, "q0", k, k)] for k in range(10)})

    @classmethod
    def none(cls) -> "NullFormSelection":
        return cls({})

    def evaluate(self, grads: np.ndarray) -> np.ndarray:
        out = np.zeros((10,) + grads.shape[2:])
        for slot, terms in self.terms.items():
            for term in terms:
                out[slot] += term.evaluate(grads)
        return out


@dataclass
class SemilinearSource:
    """Complete right side: frame coupling + null forms (+ adversarial extra).

    cartesian_extra, when set, is a raw (4,4,4,4) Cartesian coupling added
    outside the structural representation; it exists so that models which
    violate the slot constraint can be run for comparison, and so the
    checker has something to catch.
    """

    coupling: CouplingCoefficients
    nullforms: NullFormSelection
    cartesian_extra: Callable | None = None
    name: str = "custom"

    def pair_weight_matrix(self, frame: dict[str, np.ndarray]) -> tuple[list, np.ndarray]:
        """Weights turning 10 stored components into the needed contractions.

        Returns (pair list, W) with W[p, k] = A^a B^b sym_k(a, b); gradients
        of contractions are then W @ grads.  Shapes follow the frame arrays
        (constant frame -> (npairs, 10), fields -> (npairs, 10, ...)).
        """
        pairs = self.coupling.pairs_needed()
        Ws = []
        for A, B in pairs:
            va, vb = frame[A], frame[B]
            rows = []
            for (a, b) in SYM10_PAIRS:
                term = _vcomp(va, a) * _vcomp(vb, b)
                if a != b:
                    term = term + _vcomp(va, b) * _vcomp(vb, a)
                rows.append(term)
            Ws.append(np.stack([np.asarray(r, dtype=float) for r in rows]))
        if not Ws:
            return [], np.zeros((0, 10))
        return pairs, np.stack(Ws)


def _vcomp(v, a):
    v = np.asarray(v, dtype=float)
    return v[a] if v.ndim == 1 else v[..., a]


def evaluate_rhs(
    source: SemilinearSource,
    grads: np.ndarray,
    x: np.ndarray | None = None,
    t: float | None = None,
    frame: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Evaluate F_mn from precomputed gradients.

    grads has shape (10, 4, ...): first axis the tensor component, second
    the derivative direction (t, x1, x2, x3).  The frame may be passed
    directly (constant-frame fast path used by the radial evolution) or is
    computed from x.  Coefficient modulation, when present, needs x and a
    nonzero time.
    """
    grads = np.asarray(grads, dtype=float)
    if grads.shape[:2] != (10, 4):
        raise ValueError(f"grads must be (10, 4, ...), got {grads.shape}")
    if frame is None:
        if x is None:
            raise ValueError("need either a frame or Cartesian points")
        frame = frame_vectors(np.asarray(x, dtype=float))

    out = np.zeros((10,) + grads.shape[2:])

    pairs, W = source.pair_weight_matrix(frame)
    if pairs:
        if W.ndim == 2:
            dphi = np.einsum("pk,kd...->pd...", W, grads)
        else:
            dphi = np.einsum("pk...,kd...->pd...", W, grads)
        index = {p: i for i, p in enumerate(pairs)}
        scale = 1.0
        if source.coupling.modulation is not None:
            if x is None or t is None:
                raise ValueError("modulated coefficients need x and t")
            if t == 0.0:
                raise ValueError("modulated coefficients are undefined at t = 0")
            scale = source.coupling.modulation(np.asarray(x, dtype=float), float(t))
        for (A, B, C, D), c in source.coupling.entries.items():
            da = dphi[index[(A, B)]]
            db = dphi[index[(C, D)]]
            # pair-symmetrized evaluation keeps the output tensor symmetric
            # for every admissible entry list
            for slot, (m, n) in enumerate(SYM10_PAIRS):
                out[slot] += c * scale * 0.5 * (da[m] * db[n] + da[n] * db[m])

    if source.cartesian_extra is not None:
        P4 = source.cartesian_extra(x) if callable(source.cartesian_extra) else source.cartesian_extra
        gfull = _pair_grads(grads)
        full = np.einsum("abcd,mab...,ncd...->mn...", P4, gfull, gfull)
        for slot, (m, n) in enumerate(SYM10_PAIRS):
            out[slot] += full[m, n]

    out += source.nullforms.evaluate(grads)
    return out


def _pair_grads(grads):
    """Reshape (10, 4, ...) gradients to (4 dir, 4, 4, ...) full-tensor form."""
    full = np.zeros((grads.shape[1], 4, 4) + grads.shape[2:])
    for k, (a, b) in enumerate(SYM10_PAIRS):
        full[:, a, b] = grads[k]
        if a != b:
            full[:, b, a] = grads[k]
    return full


def weak_null_check(
    coupling_or_cartesian, x_samples: np.ndarray, tol: float = 1e-12
) -> bool:
    """True iff the assembled Cartesian coupling has no transversal double slot.

    Contracts P^{abcd} with the covector dual to the transversal null leg on
    the first and on the second index pair at each sample point; both
    contractions must vanish to tol.  Accepts either the structural
    representation (always passes, by construction) or a raw (4,4,4,4)
    array/callable, which is how a violating model is caught.
    """
    x_samples = np.atleast_2d(np.asarray(x_samples, dtype=float))
    for x in x_samples:
        if isinstance(coupling_or_cartesian, CouplingCoefficients):
            P4 = coupling_or_cartesian.cartesian(x)
        elif callable(coupling_or_cartesian):
            P4 = coupling_or_cartesian(x)
        else:
            P4 = np.asarray(coupling_or_cartesian, dtype=float)
        dual = np.linalg.inv(frame_matrix(x))[0]  # covector picking the Lb leg
        first = np.einsum("a,b,abcd->cd", dual, dual, P4)
        second = np.einsum("c,d,abcd->ab", dual, dual, P4)
        scale = max(1.0, float(np.max(np.abs(P4))))
        if max(np.max(np.abs(first)), np.max(np.abs(second))) > tol * scale:
            return False
    return True


@dataclass
class NullBoundReport:
    max_ratio: float
    samples: int
    bound: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.bound


def null_bound_check(
    nullforms: NullFormSelection,
    grads: np.ndarray,
    x: np.ndarray,
    bound: float = 10.0,
    eps: float = 1e-300,
) -> NullBoundReport:
    """Verify |Q| <= C |d phi| |dbar phi| on sampled gradients.

    grads: (10, 4, N) at points x: (N, 3).  The tangential part uses the
    exact split d_v = d_t + omega . grad, slashed = grad - omega (omega .
    grad).  eps regularizes the 0/0 case.
    """
    grads = np.asarray(grads, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    q = nullforms.evaluate(grads)
    omega = x / np.linalg.norm(x, axis=-1, keepdims=True)
    radial = np.einsum("kdn,nd->kn", grads[:, 1:], omega)
    dv = grads[:, 0] + radial
    slashed = grads[:, 1:] - np.einsum("kn,nd->kdn", radial, omega)
    dbar = np.sqrt(dv**2 + np.sum(slashed**2, axis=1))
    full = np.sqrt(np.sum(grads**2, axis=1))
    dbar_all = np.sqrt(np.sum(dbar**2, axis=0))
    full_all = np.sqrt(np.sum(full**2, axis=0))
    q_all = np.max(np.abs(q), axis=0)
    ratios = q_all / (full_all * dbar_all + eps)
    return NullBoundReport(float(np.max(ratios)), int(x.shape[0]), bound)


def rhs_structure_split(
    source: SemilinearSource, grads: np.ndarray, x: np.ndarray | None = None,
    frame: dict[str, np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Monitored magnitudes: tangential-contraction part and mixed part.

    good = (sum over tangential frame pairs of |d phi_TU|)^2 -- the only
    quadratic the structural coupling can produce; mixed = |d phi| |dbar
    phi| -- the null-form budget.  The transversal double contraction never
    enters good, matching the slot exclusion.
    """
    grads = np.asarray(grads, dtype=float)
    if x is None:
        raise ValueError("structure split needs sample points for the tangential part")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if grads.ndim == 2:
        grads = grads[..., None]
    if frame is None:
        frame = frame_vectors(x)
    full = _pair_grads(grads)  # (4 dir, 4, 4, N)
    good_sum = np.zeros(grads.shape[2:])
    for (A, B) in TANGENTIAL_PAIRS:
        va = np.atleast_2d(np.asarray(frame[A], dtype=float))  # (N, 4)
        vb = np.atleast_2d(np.asarray(frame[B], dtype=float))
        dphi = np.einsum("mabn,na,nb->mn", full, va, vb)
        good_sum += np.sqrt(np.sum(dphi**2, axis=0))
    good = good_sum**2

    omega = x / np.linalg.norm(x, axis=-1, keepdims=True)
    radial = np.einsum("kdn,nd->kn", grads[:, 1:], omega)
    dv = grads[:, 0] + radial
    slashed = grads[:, 1:] - np.einsum("kn,nd->kdn", radial, omega)
    dbar = np.sqrt(np.sum(dv**2, axis=0) + np.sum(slashed**2, axis=(0, 1)))
    dfull = np.sqrt(np.sum(grads**2, axis=(0, 1)))
    mixed = dfull * dbar
    return good, mixed


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

PRESETS = ("null_condition_only", "weak_null_model", "violating_model")


def make_preset(
    name: str,
    modulation_on: bool = False,
    coupling_strength: float = 1.0,
    nullform_strength: float = 1.0,
) -> SemilinearSource:
    """Concrete model choices for the three scenario families.

    weak_null_model couples every gradient pair to the squared gradient of
    the doubly tangential contraction phi_LL: the transversal equation is
    then sourced by squares of well-decaying quantities only, while no
    equation ever sees the square of the transversal derivative of the
    transversal component.  violating_model adds exactly that excluded
    coupling through the raw Cartesian path.
    """
    modulation = None
    if modulation_on:
        def modulation(x, t):
            x1 = np.asarray(x, dtype=float)[..., 0]
            return 1.0 + 0.5 * np.clip(x1 / t, -1.0, 1.0)

    q = NullFormSelection.diagonal_q0(nullform_strength)
    if name == "null_condition_only":
        return SemilinearSource(CouplingCoefficients({}, modulation), q, name=name)
    if name == "weak_null_model":
        coupling = CouplingCoefficients(
            {("L", "L", "L", "L"): coupling_strength}, modulation
        )
        return SemilinearSource(coupling, q, name=name)
    if name == "violating_model":
        coupling = CouplingCoefficients(
            {("L", "L", "L", "L"): coupling_strength}, modulation
        )

        def bad_block(x):
            fr = frame_vectors(np.asarray(x, dtype=float))
            lb = fr["Lb"]
            return coupling_strength * np.einsum("a,b,c,d->abcd", lb, lb, lb, lb)

        return SemilinearSource(coupling, q, cartesian_extra=bad_block, name=name)
    raise ValueError(f"unknown preset {name!r}; choose one of {PRESETS}")
