"""Quadratic source structure: slot exclusion, null forms, splits."""

import numpy as np
import pytest

from kerrwave import fields as F
from kerrwave import semilinear as SL


@pytest.fixture
def axis_points():
    r = np.linspace(5.0, 11.0, 7)
    return np.stack([r, 0 * r, 0 * r], axis=-1)


def null_wave_grads(x, t=13.0):
    """Gradient bundle of phi_00 = sin(t - r) along the first axis."""
    r = np.linalg.norm(x, axis=-1)
    fp = np.cos(t - r)
    grads = np.zeros((10, 4, len(r)))
    grads[0, 0] = fp
    grads[0, 1] = -fp
    return grads


class TestCouplingStructure:
    def test_bad_slots_unrepresentable(self):
        for key in (("Lb", "Lb", "L", "L"), ("L", "e2", "Lb", "Lb"), ("Lb", "Lb", "Lb", "Lb")):
            with pytest.raises(ValueError):
                SL.CouplingCoefficients({key: 1.0})

    def test_mixed_transversal_allowed(self):
        SL.CouplingCoefficients({("Lb", "L", "Lb", "e2"): 0.3})

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError):
            SL.CouplingCoefficients({("L", "L", "L"): 1.0})
        with pytest.raises(ValueError):
            SL.CouplingCoefficients({("L", "L", "L", "nope"): 1.0})

    def test_boundedness(self):
        c = SL.CouplingCoefficients({("L", "L", "L", "L"): 2.0, ("L", "e2", "L", "e3"): -1.0})
        assert c.bounded_by() == 3.0


class TestEvaluate:
    def test_zero_field(self, axis_points):
        src = SL.make_preset("weak_null_model")
        grads = np.zeros((10, 4, len(axis_points)))
        out = SL.evaluate_rhs(src, grads, x=axis_points, t=1.0)
        assert np.all(out == 0.0)

    def test_quadratic_homogeneity(self, axis_points):
        src = SL.make_preset("weak_null_model")
        rng = np.random.default_rng(3)
        grads = rng.normal(size=(10, 4, len(axis_points)))
        out = SL.evaluate_rhs(src, grads, x=axis_points, t=2.0)
        out2 = SL.evaluate_rhs(src, 2.0 * grads, x=axis_points, t=2.0)
        assert np.max(np.abs(out2 - 4.0 * out)) == 0.0

    def test_single_mode_hand_expansion(self, axis_points):
        # phi_00 = f(t - r), coupling L L L L, Q0 diagonal: the L-contraction
        # gradient equals the plain phi_00 gradient and Q0 annihilates the
        # null wave, so F_mn = d_m phi_00 d_n phi_00 exactly
        src = SL.make_preset("weak_null_model")
        grads = null_wave_grads(axis_points)
        out = SL.evaluate_rhs(src, grads, x=axis_points, t=13.0)
        d = grads[0]
        expect = np.stack([d[m] * d[n] for (m, n) in F.SYM10_PAIRS])
        assert np.max(np.abs(out - expect)) < 1e-10

    def test_output_symmetric_structurally(self, axis_points):
        # 10-slot storage is symmetric by construction; check the evaluation
        # agrees with the full-tensor contraction of the assembled coupling
        src = SL.make_preset("weak_null_model")
        rng = np.random.default_rng(5)
        grads = rng.normal(size=(10, 4, len(axis_points)))
        out = SL.evaluate_rhs(src, grads, x=axis_points, t=2.0)
        P4 = src.coupling.cartesian(axis_points[0])
        full_grads = np.zeros((4, 4, 4, len(axis_points)))
        for k, (a, b) in enumerate(F.SYM10_PAIRS):
            full_grads[:, a, b] = grads[k]
            if a != b:
                full_grads[:, b, a] = grads[k]
        q = src.nullforms.evaluate(grads)
        for slot, (m, n) in enumerate(F.SYM10_PAIRS):
            direct = np.einsum("abcd,abn,cdn->n", P4, full_grads[m], full_grads[n])
            assert np.max(np.abs(out[slot] - direct - q[slot])) < 1e-12

    def test_modulation_needs_time(self, axis_points):
        src = SL.make_preset("weak_null_model", modulation_on=True)
        grads = np.ones((10, 4, len(axis_points)))
        with pytest.raises(ValueError):
            SL.evaluate_rhs(src, grads, x=axis_points, t=0.0)
        out1 = SL.evaluate_rhs(src, grads, x=axis_points, t=50.0)
        out2 = SL.evaluate_rhs(src, grads, x=axis_points, t=5.0)
        assert not np.allclose(out1, out2)


class TestWeakNullCheck:
    def test_empty_coupling(self, axis_points):
        assert SL.weak_null_check(SL.CouplingCoefficients({}), axis_points)

    def test_tangential_entries_pass(self, axis_points):
        c = SL.CouplingCoefficients(
            {("L", "L", "L", "L"): 1.0, ("e2", "e3", "L", "Lb"): 0.7}
        )
        assert SL.weak_null_check(c, axis_points)

    def test_adversarial_cartesian_caught(self, axis_points):
        viol = SL.make_preset("violating_model")
        assert not SL.weak_null_check(viol.cartesian_extra, axis_points[:3])

    def test_zero_cartesian_passes(self, axis_points):
        assert SL.weak_null_check(np.zeros((4, 4, 4, 4)), axis_points[:2])


class TestNullBound:
    def test_null_wave_annihilation(self, axis_points):
        grads = null_wave_grads(axis_points)
        rep = SL.null_bound_check(SL.NullFormSelection.diagonal_q0(), grads, axis_points)
        assert rep.max_ratio < 1e-10

    def test_time_linear_field(self, axis_points):
        grads = np.zeros((10, 4, len(axis_points)))
        grads[0, 0] = 1.0  # phi_00 = t
        rep = SL.null_bound_check(SL.NullFormSelection.diagonal_q0(), grads, axis_points)
        assert rep.max_ratio == pytest.approx(1.0, abs=1e-12)

    def test_random_fields_bounded(self, axis_points):
        rng = np.random.default_rng(11)
        grads = rng.normal(size=(10, 4, len(axis_points)))
        rep = SL.null_bound_check(SL.NullFormSelection.diagonal_q0(), grads, axis_points)
        assert rep.passed
        assert rep.max_ratio <= 10.0

    def test_qab_form(self, axis_points):
        sel = SL.NullFormSelection({0: [SL.NullFormTerm(1.0, "qab", 0, 4, axes=(0, 1))]})
        rng = np.random.default_rng(13)
        grads = rng.normal(size=(10, 4, len(axis_points)))
        rep = SL.null_bound_check(sel, grads, axis_points)
        assert rep.passed


class TestStructureSplit:
    def test_zero_field(self, axis_points):
        src = SL.make_preset("weak_null_model")
        grads = np.zeros((10, 4, len(axis_points)))
        good, mixed = SL.rhs_structure_split(src, grads, x=axis_points)
        assert np.all(good == 0.0) and np.all(mixed == 0.0)

    def test_pure_transversal_gives_no_good_part(self, axis_points):
        src = SL.make_preset("weak_null_model")
        frame = F.frame_vectors(axis_points)
        lb = frame["Lb"][0]
        phi_lb = np.outer(lb, lb)
        grads = np.zeros((10, 4, len(axis_points)))
        for k, (a, b) in enumerate(F.SYM10_PAIRS):
            grads[k, 0] = phi_lb[a, b] * 1.7
            grads[k, 1] = phi_lb[a, b] * -0.9
        good, _ = SL.rhs_structure_split(src, grads, x=axis_points)
        assert np.max(good) < 1e-24

    def test_reconstruction_bound(self, axis_points):
        src = SL.make_preset("weak_null_model")
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(20):
            grads = rng.normal(size=(10, 4, len(axis_points)))
            good, mixed = SL.rhs_structure_split(src, grads, x=axis_points)
            out = SL.evaluate_rhs(src, grads, x=axis_points, t=3.0)
            worst = max(worst, float(np.max(np.max(np.abs(out), axis=0) / (good + mixed))))
        assert worst < 5.0  # frame-constant factor


class TestPresets:
    def test_names(self):
        for name in SL.PRESETS:
            src = SL.make_preset(name)
            assert src.name == name
        with pytest.raises(ValueError):
            SL.make_preset("nonsense")

    def test_null_condition_only_has_no_coupling(self):
        src = SL.make_preset("null_condition_only")
        assert not src.coupling.entries
        assert src.cartesian_extra is None

    def test_violating_model_extra_block(self):
        src = SL.make_preset("violating_model")
        assert src.cartesian_extra is not None
