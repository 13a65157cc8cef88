"""Evolution: operators, stability, boundaries, convergence, checkpoints."""

import numpy as np
import pytest

from kerrwave import evolution as E
from kerrwave import geometry as G
from kerrwave import semilinear as SL


@pytest.fixture(scope="module")
def schw():
    return G.KerrGeometry(G.KerrParams(1.0, 0.0))


def outgoing_data(ev, center=25.0, width=3.0):
    g = lambda s: np.exp(-(((s - center) / width) ** 2))
    gp = lambda s: -2.0 * (s - center) / width**2 * g(s)
    phi = np.tile(g(ev.rt) / ev.rt, (10, 1))
    pi = np.tile(-gp(ev.rt) / ev.rt, (10, 1))
    return E.FieldState(phi, pi, 0.0)


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            E.GridSpec("bogus", h=0.1, r_max=10.0)
        with pytest.raises(ValueError):
            E.GridSpec("spherical_1p1", h=-0.1, r_max=10.0)
        with pytest.raises(ValueError):
            E.GridSpec("spherical_1p1", h=0.1, r_max=10.0, boundary="open")


class TestInitialData:
    def test_support_strictly_inside(self):
        data = E.InitialData(1.0, 6.0)
        rt = np.linspace(0.5, 12.0, 2000)
        prof = data.profile(rt)
        assert np.all(prof[rt >= 6.0] < 1e-15)
        assert np.all(prof[rt >= 6.0] == 0.0)
        assert prof.max() > 0.5

    def test_zero_amplitude(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=30.0))
        st = ev.initialize(E.InitialData(0.0, 6.0))
        assert np.all(st.phi == 0.0) and np.all(st.pi == 0.0)

    def test_positive_energy(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=30.0))
        st = ev.initialize(E.InitialData(1.0, 6.0))
        assert ev.energy(st) > 0.0

    def test_weights_act_componentwise(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=30.0))
        w1 = np.zeros(10)
        w1[0] = 1.0
        w2 = np.zeros(10)
        w2[4] = 2.0
        s1 = ev.initialize(E.InitialData(1.0, 6.0, phi_weights=w1))
        s2 = ev.initialize(E.InitialData(1.0, 6.0, phi_weights=w2))
        assert np.all(s1.phi[1:] == 0.0)
        assert np.array_equal(2.0 * s1.phi[0], s2.phi[4])

    def test_support_reaching_excision_rejected(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=30.0))
        with pytest.raises(ValueError):
            ev.initialize(E.InitialData(1.0, 6.0, center=1.6, halfwidth=1.0))


class TestExcision:
    def test_outflow_at_excision(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=20.0))
        cm, cp = ev.excision.speeds
        assert cm < 0.0 and cp < 0.0
        assert cm == pytest.approx(-2.0, abs=1e-12)  # -rt'/mu' at c0 = 1/2
        assert cp == pytest.approx(-0.4, abs=1e-12)

    def test_wave_coefficient_positive(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=20.0))
        assert np.all(ev.U2 > 0.0)
        assert np.all(ev.A < 0.0)


class TestFlatPropagation:
    def test_outgoing_wave_exact(self):
        spec = E.GridSpec("spherical_1p1", h=1 / 32, r_max=60.0, ko_sigma=0.0)
        ev = E.SphericalEvolver(None, spec, r_lo=1.0)
        st = outgoing_data(ev)
        final, _ = E.evolve(ev, st, 10.0, record=False)
        exact = np.exp(-(((ev.rt - 10.0 - 25.0) / 3.0) ** 2)) / ev.rt
        assert np.max(np.abs(final.phi[0] - exact)) < 1e-8

    def test_time_reversal(self):
        spec = E.GridSpec("spherical_1p1", h=1 / 32, r_max=60.0, ko_sigma=0.0)
        ev = E.SphericalEvolver(None, spec, r_lo=1.0)
        st = outgoing_data(ev)
        final, _ = E.evolve(ev, st, 10.0, record=False)
        back = E.FieldState(final.phi.copy(), -final.pi.copy(), 0.0)
        rev, _ = E.evolve(ev, back, 10.0, record=False)
        assert np.max(np.abs(rev.phi[0] - st.phi[0])) < 1e-11

    def test_zero_state_fixed_point(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=20.0))
        st = E.FieldState(np.zeros((10, ev.n)), np.zeros((10, ev.n)), 0.0)
        out = E.step_rk4(ev, st, 0.01)
        assert np.all(out.phi == 0.0) and np.all(out.pi == 0.0)

    def test_rhs_zero_state(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=20.0))
        dphi, dP = ev.rhs(0.0, np.zeros((10, ev.n)), np.zeros((10, ev.n)))
        assert np.all(dphi == 0.0) and np.all(dP == 0.0)

    def test_constants_are_solutions(self, schw):
        # u = const, pi = 0 solves the homogeneous system
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=20.0))
        phi = np.ones((10, ev.n))
        P = ev.to_momentum(phi, np.zeros_like(phi))
        dphi, dP = ev.rhs(0.0, phi, P)
        assert np.max(np.abs(dphi)) < 1e-12
        assert np.max(np.abs(dP)) < 1e-9

    def test_energy_constant_before_boundary_contact(self):
        spec = E.GridSpec("spherical_1p1", h=1 / 16, r_max=40.0, ko_sigma=0.0)
        ev = E.SphericalEvolver(None, spec, r_lo=1.0)
        data = E.InitialData(1.0, 25.0, center=15.0, halfwidth=4.0)
        st = ev.initialize(data)
        e0 = ev.energy(st)
        final, _ = E.evolve(ev, st, 8.0, record=False)
        assert abs(ev.energy(final) - e0) / e0 < 2e-5


class TestRK4:
    def test_exponential_decay_order(self):
        # the stage combination integrates du/dt = -lam u at 4th order
        class Stub:
            spec = E.GridSpec("spherical_1p1", h=1.0, r_max=100.0)
            c_max = 1.0

            def rhs(self, t, phi, pi):
                return -1.3 * phi, -1.3 * pi

            def apply_boundary(self, state):
                pass

        stub = Stub()
        errs = []
        for dt in (0.1, 0.05):
            st = E.FieldState(np.ones((1, 16)), np.ones((1, 16)), 0.0)
            n = int(round(2.0 / dt))
            for _ in range(n):
                st = E._rk4_internal(stub, st, dt)
            errs.append(abs(st.phi[0, 0] - np.exp(-1.3 * 2.0)))
        assert 12.0 < errs[0] / errs[1] < 20.0


class TestSchwarzschildRuns:
    def test_stable_long_run_with_bounded_energy(self, schw):
        spec = E.GridSpec("spherical_1p1", h=1 / 16, r_max=95.0)
        ev = E.SphericalEvolver(schw, spec)
        data = E.InitialData(1.0, 6.0)
        st = ev.initialize(data)
        ev.check_causal_domain(data, 40.0)
        final, run = E.evolve(ev, st, 40.0, record=True, guard_linear_energy=True)
        assert final.finite()
        Es = np.array([ev.energy(run_state(run, k)) for k in range(run.n_snapshots)])
        # the nondegenerate energy is equivalent to (not equal to) the flux
        # energy: bounded transient growth, eventual decay
        assert np.max(Es) / Es[0] < 1.4
        assert Es[-1] / Es[0] < 0.7

    def test_light_cone_violation(self, schw):
        spec = E.GridSpec("spherical_1p1", h=1 / 16, r_max=60.0)
        ev = E.SphericalEvolver(schw, spec)
        data = E.InitialData(1.0, 6.0)
        st = ev.initialize(data)
        worst = []

        def watch(evolver, state):
            worst.append(evolver.light_cone_violation(state, data))

        E.evolve(ev, st, 20.0, record=False, callbacks=[watch])
        assert max(worst) < 1e-12

    def test_causal_domain_guard(self, schw):
        spec = E.GridSpec("spherical_1p1", h=1 / 8, r_max=30.0)
        ev = E.SphericalEvolver(schw, spec)
        data = E.InitialData(1.0, 6.0)
        with pytest.raises(E.EvolutionError):
            ev.check_causal_domain(data, 100.0)

    def test_richardson_order_short(self, schw):
        data = E.InitialData(1.0, 6.0)
        sols = {}
        for h in (1 / 16, 1 / 32, 1 / 64):
            spec = E.GridSpec("spherical_1p1", h=h, r_max=30.0)
            ev = E.SphericalEvolver(schw, spec)
            final, _ = E.evolve(ev, ev.initialize(data), 8.0, record=False)
            sols[h] = final.phi[0]
        # early-time smokes sit partly above 4th order (the leading error
        # has not accumulated); the acceptance suite pins the 4 +- 0.5 band
        # on its longer configuration
        d1 = np.linalg.norm(sols[1 / 16] - sols[1 / 32][::2])
        d2 = np.linalg.norm(sols[1 / 32][::2] - sols[1 / 64][::4])
        assert d1 / d2 > 11.0

    def test_stability_probe(self, schw):
        ev = E.SphericalEvolver(schw, E.GridSpec("spherical_1p1", h=1 / 8, r_max=30.0))
        growth = E.stability_probe(ev, E.InitialData(1.0, 6.0))
        assert growth < 1.1


def run_state(run, k):
    return E.FieldState(run.phi[k], run.pi[k], float(run.t[k]))


class TestSommerfeld:
    def test_reflection_small(self):
        spec = E.GridSpec("spherical_1p1", h=1 / 32, r_max=40.0, boundary="sommerfeld")
        ev = E.SphericalEvolver(None, spec, r_lo=1.0)
        st = outgoing_data(ev, center=25.0, width=2.5)
        incident = np.max(np.abs(st.phi))
        final, _ = E.evolve(ev, st, 25.0, record=False)
        assert np.max(np.abs(final.phi)) / incident < 1e-3

    def test_zero_field_noop(self):
        spec = E.GridSpec("spherical_1p1", h=1 / 8, r_max=20.0, boundary="sommerfeld")
        ev = E.SphericalEvolver(None, spec, r_lo=1.0)
        st = E.FieldState(np.zeros((10, ev.n)), np.zeros((10, ev.n)), 0.0)
        out, _ = E.evolve(ev, st, 2.0, record=False)
        assert np.all(out.phi == 0.0)


class TestNonlinear:
    def test_quadratic_smallness(self, schw):
        # amplitudes small enough that the relative deviation from the
        # linear flow is itself small; halving the amplitude then halves it
        spec = E.GridSpec("spherical_1p1", h=1 / 16, r_max=50.0)
        src = SL.make_preset("weak_null_model")
        lin = E.SphericalEvolver(schw, spec)
        base, _ = E.evolve(lin, lin.initialize(E.InitialData(1.0, 6.0)), 16.0, record=False)
        devs = []
        for eps in (4e-4, 2e-4):
            ev = E.SphericalEvolver(schw, spec, source=src)
            final, _ = E.evolve(ev, ev.initialize(E.InitialData(eps, 6.0)), 16.0, record=False)
            devs.append(np.linalg.norm(final.phi / eps - base.phi) / np.linalg.norm(base.phi))
        assert devs[0] < 0.3
        ratio = devs[0] / devs[1]
        assert 1.7 < ratio < 2.3  # first order in the amplitude

    def test_violating_preset_runs_small_amplitude(self, schw):
        spec = E.GridSpec("spherical_1p1", h=1 / 16, r_max=40.0)
        src = SL.make_preset("violating_model")
        ev = E.SphericalEvolver(schw, spec, source=src)
        final, _ = E.evolve(ev, ev.initialize(E.InitialData(1e-3, 6.0)), 10.0, record=False)
        assert final.finite()


class TestAxisym:
    def test_smoke_kerr(self):
        geom = G.KerrGeometry(G.KerrParams(1.0, 0.05))
        spec = E.GridSpec("axisym_2p1", h=1 / 8, r_max=30.0, n_theta=16)
        ev = E.AxisymEvolver(geom, spec)
        cm, cp = ev.excision.speeds
        assert cm < 0 and cp < 0
        st = ev.initialize(E.InitialData(1.0, 6.0))
        final, run = E.evolve(ev, st, 6.0, record=True, guard_linear_energy=True)
        assert final.finite()
        e0 = ev.energy(run_state(run, 0))
        assert ev.energy(final) < 1.4 * e0

    def test_richardson(self):
        # cell-centered theta grids do not nest; interpolate finer runs to
        # the coarse angles with splines before differencing
        from scipy.interpolate import CubicSpline

        geom = G.KerrGeometry(G.KerrParams(1.0, 0.05))
        data = E.InitialData(1.0, 6.0)
        sols = {}
        thetas = {}
        for h, nth in ((1 / 8, 12), (1 / 16, 24), (1 / 32, 48)):
            spec = E.GridSpec("axisym_2p1", h=h, r_max=18.0, n_theta=nth)
            ev = E.AxisymEvolver(geom, spec)
            final, _ = E.evolve(ev, ev.initialize(data), 4.0, record=False)
            sols[h] = final.phi[0]
            thetas[h] = ev.theta

        def at_coarse(h_fine, stride):
            u = sols[h_fine][::stride]
            return CubicSpline(thetas[h_fine], u, axis=1)(thetas[1 / 8])

        d1 = np.linalg.norm(sols[1 / 8] - at_coarse(1 / 16, 2))
        d2 = np.linalg.norm(at_coarse(1 / 16, 2) - at_coarse(1 / 32, 4))
        assert d1 / d2 > 8.0  # 4th order modulo pole-adjacent transients

    def test_rejects_flat(self):
        with pytest.raises(ValueError):
            E.AxisymEvolver(None, E.GridSpec("axisym_2p1", h=1 / 8, r_max=20.0))


class TestCartesian:
    def test_plane_wave_dispersion_order(self):
        errs = []
        for h in (0.25, 0.125):
            spec = E.GridSpec("full_3p1", h=h, r_max=4.0, ko_sigma=0.0)
            ev = E.CartesianEvolver(spec)
            X, _, _ = np.meshgrid(ev.axis, ev.axis, ev.axis, indexing="ij")
            phi = np.sin(X)[None].repeat(10, 0)
            _, dpi = ev.rhs(0.0, phi, np.zeros_like(phi))
            interior = (slice(None),) + (slice(4, -4),) * 3
            errs.append(np.max(np.abs(dpi + phi)[interior]))
        assert 12.0 < errs[0] / errs[1] < 20.0

    def test_finite_propagation(self):
        # origin-centered profile wide enough that the grid resolves its
        # spectrum (a narrow profile would shed dispersive junk above the
        # cone at the measured tolerance)
        spec = E.GridSpec("full_3p1", h=0.3125, r_max=10.0)
        ev = E.CartesianEvolver(spec)
        data = E.InitialData(1.0, 7.0, center=0.0, halfwidth=6.8)
        st = ev.initialize(data)
        final, _ = E.evolve(ev, st, 1.5, record=False)
        assert ev.light_cone_violation(final, data) < 1e-12

    def test_kerr_background_rejected(self):
        geom = G.KerrGeometry(G.KerrParams(1.0, 0.05))
        with pytest.raises(NotImplementedError):
            E.CartesianEvolver(E.GridSpec("full_3p1", h=0.5, r_max=6.0), geom)


class TestCheckpoints:
    def test_roundtrip(self, tmp_path, schw):
        spec = E.GridSpec("spherical_1p1", h=1 / 8, r_max=30.0)
        ev = E.SphericalEvolver(schw, spec)
        st = ev.initialize(E.InitialData(1.0, 6.0))
        final, _ = E.evolve(ev, st, 4.0, record=False)
        path = str(tmp_path / "state.kwck")
        E.write_checkpoint(path, ev, final, {"M": 1.0, "a": 0.0})
        mode, dims, h, t, M, a, phi, pi = E.read_checkpoint(path)
        assert mode == "spherical_1p1"
        assert dims == (ev.n,)
        assert (h, t, M, a) == (spec.h, final.t, 1.0, 0.0)
        assert np.array_equal(phi, final.phi)
        assert np.array_equal(pi, final.pi)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            E.read_checkpoint(str(path))

    def test_resume_matches_uninterrupted(self, tmp_path, schw):
        spec = E.GridSpec("spherical_1p1", h=1 / 8, r_max=40.0)
        data = E.InitialData(1.0, 6.0)
        ev = E.SphericalEvolver(schw, spec)
        direct, _ = E.evolve(ev, ev.initialize(data), 8.0, record=False)
        mid, _ = E.evolve(ev, ev.initialize(data), 4.0, record=False)
        path = str(tmp_path / "mid.kwck")
        E.write_checkpoint(path, ev, mid, {"M": 1.0, "a": 0.0})
        _, _, _, t0, _, _, phi, pi = E.read_checkpoint(path)
        resumed, _ = E.evolve(ev, E.FieldState(phi, pi, t0), 4.0, record=False)
        assert resumed.t == pytest.approx(direct.t)
        assert np.max(np.abs(resumed.phi - direct.phi)) < 1e-11


class TestDeterminism:
    def test_bitwise_repeat(self, schw):
        spec = E.GridSpec("spherical_1p1", h=1 / 8, r_max=40.0)
        outs = []
        for _ in range(2):
            ev = E.SphericalEvolver(schw, spec)
            final, _ = E.evolve(ev, ev.initialize(E.InitialData(1.0, 6.0)), 6.0, record=False)
            outs.append(final)
        assert np.array_equal(outs[0].phi, outs[1].phi)
        assert np.array_equal(outs[0].pi, outs[1].pi)
