"""Physical <-> lattice unit conversion and stable parameter derivation.

All conversions hang off a :class:`LatticeUnits` value derived from a
voxel size, a time step and the fluid being simulated.  The relaxation
time follows from the kinematic viscosity via

    nu_lattice = nu_physical * dt / dx**2
    tau        = 3 * nu_lattice + 1/2

and must stay inside (0.5, tau_max) for a stable BGK collision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .lattice import CS2


class TauUnstable(ValueError):
    """The (dx, dt, fluid) triple maps outside the stable relaxation range."""


class MachExceeded(ValueError):
    """A converted velocity breaks the weakly-compressible validity bound."""


class MachWarning(UserWarning):
    """A converted velocity is large enough for compressibility error to matter."""


# weakly-compressible validity bounds on lattice velocity magnitude
MACH_WARN = 0.1
MACH_ERROR = 0.3


@dataclass(frozen=True)
class FluidProperties:
    """Newtonian fluid described by density [kg/m^3] and dynamic viscosity [Pa s].

    Zero viscosity is representable (it is the tau = 1/2 stability
    boundary) but rejected by :func:`derive_lattice_units`.
    """

    density: float
    dynamic_viscosity: float

    def __post_init__(self):
        if self.density <= 0.0:
            raise ValueError(f"density must be positive, got {self.density}")
        if self.dynamic_viscosity < 0.0:
            raise ValueError(
                f"dynamic viscosity must be non-negative, got {self.dynamic_viscosity}"
            )

    @property
    def kinematic_viscosity(self) -> float:
        return self.dynamic_viscosity / self.density

    def scaled(self, factor: float) -> "FluidProperties":
        """Same fluid with viscosity multiplied by ``factor``."""
        return FluidProperties(self.density, self.dynamic_viscosity * factor)


#: conventional whole-blood properties; viscosity overridable per configuration
BLOOD = FluidProperties(density=1050.0, dynamic_viscosity=3.5e-3)


@dataclass(frozen=True)
class LatticeUnits:
    """Scales tying the dimensionless lattice to physical units.

    velocity_scale is exactly dx/dt; pressure_scale is rho*(dx/dt)^2,
    i.e. pascal per unit of lattice momentum-flux density.
    """

    dx: float
    dt: float
    tau: float
    velocity_scale: float
    pressure_scale: float

    def __post_init__(self):
        if self.dx <= 0.0 or self.dt <= 0.0:
            raise ValueError("dx and dt must be positive")
        if self.tau <= 0.5:
            raise TauUnstable(f"tau = {self.tau} <= 0.5")
        if self.velocity_scale != self.dx / self.dt:
            raise ValueError("velocity_scale must equal dx/dt exactly")


def derive_lattice_units(
    dx: float,
    dt: float,
    fluid: FluidProperties,
    tau_max: float = 2.0,
) -> LatticeUnits:
    """Derive lattice scales and the BGK relaxation time for a fluid.

    Raises TauUnstable when the resulting tau falls outside
    (0.5, tau_max): the (dx, dt) pair cannot represent the fluid.
    """
    if dx <= 0.0 or dt <= 0.0:
        raise ValueError("dx and dt must be positive")
    nu_lattice = fluid.kinematic_viscosity * dt / dx**2
    tau = 3.0 * nu_lattice + 0.5
    if tau <= 0.5:
        raise TauUnstable(
            f"tau = {tau} <= 0.5: viscosity too small for dx={dx}, dt={dt}"
        )
    if tau >= tau_max:
        raise TauUnstable(
            f"tau = {tau} >= {tau_max}: time step too large for dx={dx}"
        )
    vs = dx / dt
    return LatticeUnits(
        dx=dx,
        dt=dt,
        tau=tau,
        velocity_scale=vs,
        pressure_scale=fluid.density * vs**2,
    )


def to_lattice_velocity(u: float, units: LatticeUnits) -> float:
    """Convert a velocity in m/s to lattice units.

    Emits :class:`MachWarning` above the weakly-compressible guideline;
    the hard cap at MACH_ERROR is enforced where velocities enter the
    solver (profile construction and schedule validation).
    """
    u_lat = u * units.dt / units.dx
    if abs(u_lat) > MACH_WARN:
        warnings.warn(
            f"lattice velocity {u_lat:.4f} > {MACH_WARN}: compressibility "
            "error may be significant",
            MachWarning,
            stacklevel=2,
        )
    return u_lat


def to_physical_velocity(u_lat: float, units: LatticeUnits) -> float:
    return u_lat * units.velocity_scale


def to_physical_stress(
    sigma_lattice: float, units: LatticeUnits, fluid: FluidProperties
) -> float:
    """Convert a lattice stress to Pa."""
    return sigma_lattice * fluid.density * units.velocity_scale**2


def to_lattice_stress(
    sigma_pa: float, units: LatticeUnits, fluid: FluidProperties
) -> float:
    return sigma_pa / (fluid.density * units.velocity_scale**2)


def to_physical_pressure(
    rho_lattice: float, units: LatticeUnits, fluid: FluidProperties
) -> float:
    """Gauge pressure in Pa of a lattice density (rho = 1 is zero gauge)."""
    return CS2 * (rho_lattice - 1.0) * fluid.density * units.velocity_scale**2


def to_physical_time(steps: int, units: LatticeUnits) -> float:
    return steps * units.dt
