import numpy as np
import pytest
from hypothesis import given, strategies as st

from hemoflow.units import (
    BLOOD,
    FluidProperties,
    LatticeUnits,
    MachWarning,
    TauUnstable,
    derive_lattice_units,
    to_lattice_stress,
    to_lattice_velocity,
    to_physical_pressure,
    to_physical_stress,
    to_physical_velocity,
)

# reference resolution used throughout: 18.9 um voxels, 0.5014 us steps
DX = 18.9e-6
DT = 0.5014e-6


def test_tau_from_reference_resolution():
    units = derive_lattice_units(DX, DT, BLOOD)
    expected = 3.0 * (0.0035 / 1050.0) * (DT / DX**2) + 0.5
    assert units.tau == pytest.approx(expected, rel=0, abs=0)
    assert units.tau == pytest.approx(0.51404, abs=5e-6)
    assert units.velocity_scale == DX / DT
    assert units.pressure_scale == 1050.0 * (DX / DT) ** 2


def test_zero_viscosity_is_unstable():
    inviscid = FluidProperties(density=1050.0, dynamic_viscosity=0.0)
    with pytest.raises(TauUnstable):
        derive_lattice_units(1e-4, 1e-6, inviscid)


def test_unit_lattice_sixth_viscosity_gives_tau_one():
    fluid = FluidProperties(density=1.0, dynamic_viscosity=1.0 / 6.0)
    units = derive_lattice_units(1.0, 1.0, fluid)
    assert units.tau == 1.0


def test_tau_upper_bound():
    thick = FluidProperties(density=1.0, dynamic_viscosity=10.0)
    with pytest.raises(TauUnstable):
        derive_lattice_units(1.0, 1.0, thick)


def test_fluid_validation():
    with pytest.raises(ValueError):
        FluidProperties(density=-1.0, dynamic_viscosity=1e-3)
    with pytest.raises(ValueError):
        FluidProperties(density=1000.0, dynamic_viscosity=-1e-3)
    assert BLOOD.kinematic_viscosity == pytest.approx(0.0035 / 1050.0)


def test_lattice_units_invariants():
    with pytest.raises(TauUnstable):
        LatticeUnits(dx=1.0, dt=1.0, tau=0.5, velocity_scale=1.0, pressure_scale=1.0)
    with pytest.raises(ValueError):
        LatticeUnits(dx=1.0, dt=2.0, tau=0.8, velocity_scale=1.0, pressure_scale=1.0)


def test_peak_reported_velocity_converts():
    units = derive_lattice_units(DX, DT, BLOOD)
    u_lat = to_lattice_velocity(1.19, units)
    assert u_lat == pytest.approx(0.03157, abs=1e-5)


def test_zero_and_scale_velocity():
    units = derive_lattice_units(DX, DT, BLOOD)
    assert to_lattice_velocity(0.0, units) == 0.0
    # the conversion itself is unguarded; flow paths enforce the hard cap
    with pytest.warns(MachWarning):
        assert to_lattice_velocity(DX / DT, units) == 1.0


def test_mach_warning_threshold():
    units = derive_lattice_units(DX, DT, BLOOD)
    with pytest.warns(MachWarning):
        to_lattice_velocity(0.11 * DX / DT, units)


@given(st.floats(min_value=-100.0, max_value=100.0, allow_nan=False))
def test_velocity_round_trip(u):
    units = derive_lattice_units(DX, DT, BLOOD)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MachWarning)
        u_lat = to_lattice_velocity(u, units)
    back = to_physical_velocity(u_lat, units)
    assert back == pytest.approx(u, rel=1e-12, abs=1e-300)


def test_stress_trivial_values():
    unit_fluid = FluidProperties(density=1.0, dynamic_viscosity=1.0 / 6.0)
    units = derive_lattice_units(1.0, 1.0, unit_fluid)
    assert to_physical_stress(0.0, units, unit_fluid) == 0.0
    assert to_physical_stress(1.0, units, unit_fluid) == 1.0


def test_stress_round_trip_reported_peak():
    units = derive_lattice_units(DX, DT, BLOOD)
    sigma = to_lattice_stress(18.0, units, BLOOD)
    back = to_physical_stress(sigma, units, BLOOD)
    assert back == pytest.approx(18.0, rel=1e-12)


@given(st.floats(min_value=0.003, max_value=0.004))
def test_tau_band_for_physiological_viscosity(mu):
    fluid = FluidProperties(density=1050.0, dynamic_viscosity=mu)
    units = derive_lattice_units(DX, DT, fluid)
    assert 0.512 < units.tau < 0.517


def test_gauge_pressure():
    unit_fluid = FluidProperties(density=1.0, dynamic_viscosity=1.0 / 6.0)
    units = derive_lattice_units(1.0, 1.0, unit_fluid)
    assert to_physical_pressure(1.0, units, unit_fluid) == 0.0
    assert to_physical_pressure(1.3, units, unit_fluid) == pytest.approx(0.1)
