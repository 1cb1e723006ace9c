import os

os.environ.setdefault("MPLBACKEND", "Agg")

import numpy as np
import pytest

from hemoflow import lbm
from hemoflow.geometry import Cylinder, voxelize_primitive
from hemoflow.units import BLOOD, derive_lattice_units


@pytest.fixture(scope="session")
def small_cylinder():
    """Shared D=12 cylinder domain (R = 1 mm) with compiled tables."""
    dx = 2.0e-3 / 12
    shape = Cylinder(radius=6 * dx, length=24 * dx)
    domain = voxelize_primitive(shape, dx)
    return domain, lbm.build_tables(domain)


@pytest.fixture(scope="session")
def stokesish_units(small_cylinder):
    """Lattice units with tau comfortably inside the stable band."""
    domain, _ = small_cylinder
    dx = domain.voxel_size
    dt = 0.05 * dx / 0.46
    return derive_lattice_units(dx, dt, BLOOD.scaled(30.0))


def constant_schedule(tables, profile, u_lat, n_steps, ramp_steps=500):
    """Constant-drive schedule with a linear start-up ramp."""
    scales = np.full(n_steps + 1, u_lat)
    if ramp_steps:
        scales = scales * np.minimum(np.arange(n_steps + 1) / ramp_steps, 1.0)
    return lbm.BoundarySchedule(
        inlets=[lbm.InletSchedule(profile.port_index, profile.shape, scales)],
        n_steps=n_steps,
    )
