import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hemoflow import coupling, lbm
from hemoflow.lattice import C, CS2, W
from hemoflow.units import BLOOD, FluidProperties, derive_lattice_units

from conftest import constant_schedule

UNIT_FLUID = FluidProperties(density=1.0, dynamic_viscosity=1.0 / 6.0)
UNIT_UNITS = derive_lattice_units(1.0, 1.0, UNIT_FLUID)


class TestEquilibrium:
    def test_rest_equilibrium_is_weights(self):
        feq = lbm.equilibrium(1.0, np.zeros(3))
        np.testing.assert_allclose(feq, W, rtol=0, atol=0)

    def test_moment_identities(self):
        rho, u = 1.05, np.array([0.02, 0.0, 0.0])
        feq = lbm.equilibrium(rho, u)
        assert feq.sum() == pytest.approx(rho, abs=1e-14)
        np.testing.assert_allclose(feq @ C.astype(float), rho * u, atol=1e-14)

    def test_second_moment_matches_direct_summation(self):
        rho, u = 1.0, np.array([0.05, 0.02, -0.01])
        feq = lbm.equilibrium(rho, u)
        second = np.einsum("q,qa,qb->ab", feq, C.astype(float), C.astype(float))
        expected = rho * (CS2 * np.eye(3) + np.outer(u, u))
        np.testing.assert_allclose(second, expected, atol=1e-14)

    @given(
        st.floats(min_value=0.8, max_value=1.2),
        st.lists(st.floats(min_value=-0.1, max_value=0.1), min_size=3, max_size=3),
    )
    @settings(max_examples=30, deadline=None)
    def test_moments_property(self, rho, u):
        u = np.array(u)
        feq = lbm.equilibrium(rho, u)
        assert feq.sum() == pytest.approx(rho, abs=1e-13)
        np.testing.assert_allclose(feq @ C.astype(float), rho * u, atol=1e-13)


class TestInvariants:
    def test_global_equilibrium_fixed_point(self):
        tables = lbm.periodic_box_tables((6, 6, 6))
        state = lbm.initialize(tables, UNIT_UNITS)
        f0 = state.f.copy()
        for _ in range(10):
            lbm.step(state)
        assert np.abs(state.f - f0).max() < 1e-14

    def test_mass_conserved_in_closed_box(self):
        tables = lbm.closed_box_tables((10, 10, 10))
        state = lbm.initialize(tables, UNIT_UNITS)
        rng = np.random.default_rng(7)
        rho = 1.0 + 0.02 * np.sin(2 * np.pi * tables.coords[:, 0] / 10.0)
        u = 0.02 * rng.standard_normal((tables.n_sites, 3))
        state.f = lbm.equilibrium(rho, u)
        state._scratch = np.empty_like(state.f)
        m0 = state.total_mass()
        for _ in range(10_000):
            lbm.step(state)
        assert abs(state.total_mass() - m0) / m0 < 1e-8

    def test_bouzidi_half_q_matches_bounce_back(self):
        def perturbed_state(tables):
            state = lbm.initialize(tables, UNIT_UNITS)
            rho = 1.0 + 0.01 * np.cos(2 * np.pi * tables.coords[:, 1] / 8.0)
            u = 0.01 * np.stack(
                [
                    np.sin(2 * np.pi * tables.coords[:, 2] / 8.0),
                    np.cos(2 * np.pi * tables.coords[:, 0] / 8.0),
                    np.zeros(tables.n_sites),
                ],
                axis=1,
            )
            state.f = lbm.equilibrium(rho, u)
            state._scratch = np.empty_like(state.f)
            return state

        tables = lbm.closed_box_tables((8, 8, 8))
        a = perturbed_state(tables)
        b = perturbed_state(tables)
        for _ in range(300):
            lbm.step(a, wall_scheme="bouzidi")
            lbm.step(b, wall_scheme="bounceback")
            assert np.abs(a.f - b.f).max() <= 1e-12


class TestBouzidiFormula:
    """Single-link checks of the interpolation branches."""

    def _one_site_tables(self, q):
        # two fluid sites along x; site 0 has a wall in -x at fraction q
        tables = lbm.closed_box_tables((2, 1, 1))
        tables.qwall[:] = 0.5
        tables.qwall[0, 2] = q  # direction 2 is (-1, 0, 0)
        return tables

    def _stream_once(self, tables, f_post):
        f_new = np.empty_like(f_post)
        from hemoflow import _kernels

        _kernels.stream(f_new, f_post, tables.nbr, tables.qwall, True)
        return f_new

    def test_low_q_branch(self):
        q = 0.25
        tables = self._one_site_tables(q)
        rng = np.random.default_rng(3)
        f_post = np.abs(rng.standard_normal((2, 19))) + 0.5
        f_new = self._stream_once(tables, f_post)
        # population 1 (+x) at site 0 returns from the -x wall
        expected = 2 * q * f_post[0, 2] + (1 - 2 * q) * f_post[1, 2]
        assert f_new[0, 1] == pytest.approx(expected, rel=0, abs=0)

    def test_high_q_branch(self):
        q = 0.8
        tables = self._one_site_tables(q)
        rng = np.random.default_rng(4)
        f_post = np.abs(rng.standard_normal((2, 19))) + 0.5
        f_new = self._stream_once(tables, f_post)
        expected = f_post[0, 2] / (2 * q) + (2 * q - 1) / (2 * q) * f_post[0, 1]
        assert f_new[0, 1] == pytest.approx(expected, rel=1e-15)

    def test_unit_q_is_average_of_link_pair(self):
        tables = self._one_site_tables(1.0)
        rng = np.random.default_rng(5)
        f_post = np.abs(rng.standard_normal((2, 19))) + 0.5
        f_new = self._stream_once(tables, f_post)
        assert f_new[0, 1] == pytest.approx(0.5 * (f_post[0, 2] + f_post[0, 1]))


class TestRun:
    def test_zero_steps_rejected(self):
        tables = lbm.periodic_box_tables((4, 4, 4))
        with pytest.raises(ValueError):
            lbm.run(tables, None, UNIT_UNITS, n_steps=0)

    def test_extraction_cadence_count(self):
        events = []

        class Hook:
            cadence = 50

            def on_event(self, state):
                events.append(state.step)

        tables = lbm.periodic_box_tables((4, 4, 4))
        lbm.run(tables, None, UNIT_UNITS, n_steps=200, extraction_hooks=[Hook()])
        assert events == [50, 100, 150, 200]

    def test_diverged_carries_diagnostics(self):
        tables = lbm.periodic_box_tables((4, 4, 4))
        state = lbm.initialize(tables, UNIT_UNITS)
        u = np.zeros((tables.n_sites, 3))
        u[5] = (0.5, 0.0, 0.0)  # beyond the hard cap
        state.f = lbm.equilibrium(np.ones(tables.n_sites), u)
        state._scratch = np.empty_like(state.f)
        with pytest.raises(lbm.Diverged) as err:
            lbm.step(state)
        assert err.value.site == tuple(tables.coords[5])
        assert err.value.max_velocity == pytest.approx(0.5, rel=1e-6)

    def test_schedule_mach_guard(self, small_cylinder, stokesish_units):
        _, tables = small_cylinder
        port = tables.inlet_ports[0]
        shape = np.ones(port.sites.size)
        sched = lbm.BoundarySchedule(
            inlets=[lbm.InletSchedule(0, shape, np.full(11, 0.31))], n_steps=10
        )
        with pytest.raises(lbm.InletMachExceeded):
            sched.validate(tables, 10)


class TestPorts:
    def test_zero_profile_behaves_as_wall(self, small_cylinder, stokesish_units):
        from hemoflow.extraction import ProbePlane, plane_flux, snap_plane

        domain, tables = small_cylinder
        units = stokesish_units
        port = tables.inlet_ports[0]
        profile = coupling.build_profile(0.0, port.spec, tables, units)
        sched = constant_schedule(tables, profile, 0.0, 60, ramp_steps=0)
        res = lbm.run(tables, sched, units, n_steps=60)
        state = res.state
        state.macroscopics()
        plane = snap_plane(
            tables, np.asarray(port.spec.center) + 1e-8, port.spec.normal
        )
        assert abs(plane_flux(state, plane, units)) < 1e-10

    def test_steady_inlet_mean_velocity_matches_imposed(
        self, small_cylinder, stokesish_units
    ):
        from hemoflow.extraction import ProbePlane, probe_plane, snap_plane

        domain, tables = small_cylinder
        units = stokesish_units
        port = tables.inlet_ports[0]
        u_mean = 0.46
        profile = coupling.build_profile(u_mean, port.spec, tables, units)
        n_steps = 4000
        sched = constant_schedule(
            tables, profile, profile.mean_lattice_velocity, n_steps
        )
        res = lbm.run_steady(tables, sched, units, max_steps=n_steps, tol=1e-8)
        state = res.state
        plane = snap_plane(
            tables, np.asarray(port.spec.center) + 1e-8, port.spec.normal
        )
        rec = probe_plane(state, plane, units, BLOOD.scaled(30.0))
        assert rec.v_mean_m_s == pytest.approx(u_mean, rel=0.01)

    def test_outlet_relaxes_to_reference_density(
        self, small_cylinder, stokesish_units
    ):
        domain, tables = small_cylinder
        units = stokesish_units
        port = tables.inlet_ports[0]
        profile = coupling.build_profile(0.3, port.spec, tables, units)
        sched = constant_schedule(tables, profile, profile.mean_lattice_velocity, 3000)
        res = lbm.run_steady(tables, sched, units, max_steps=3000, tol=1e-8)
        rho, _ = res.state.macroscopics()
        outlet_sites = tables.outlet_ports[0].sites
        np.testing.assert_allclose(rho[outlet_sites], 1.0, atol=1e-6)

    def test_determinism_bitwise(self, small_cylinder, stokesish_units):
        domain, tables = small_cylinder
        units = stokesish_units
        port = tables.inlet_ports[0]

        def run_once():
            profile = coupling.build_profile(0.4, port.spec, tables, units)
            scales = profile.mean_lattice_velocity * np.abs(
                np.sin(np.arange(401) / 40.0)
            )
            sched = lbm.BoundarySchedule(
                inlets=[lbm.InletSchedule(0, profile.shape, scales)], n_steps=400
            )
            res = lbm.run(tables, sched, units, n_steps=400)
            return res.state.f.copy()

        f1 = run_once()
        f2 = run_once()
        assert np.array_equal(f1, f2)
