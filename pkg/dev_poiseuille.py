"""Dev scratch: Poiseuille validation wiring check (deleted before ship)."""
import time

import numpy as np

from hemoflow import lbm
from hemoflow.geometry import Cylinder, voxelize_primitive
from hemoflow.units import BLOOD, derive_lattice_units

dx = 1.0e-4  # R = 1 mm at 10 voxels
U = 0.46
dt = 0.05 * dx / U
units = derive_lattice_units(dx, dt, BLOOD)
print("tau", units.tau, "dt", dt)

cyl = Cylinder(radius=10 * dx, length=40 * dx)
dom = voxelize_primitive(cyl, dx)
tables = lbm.build_tables(dom)
print("sites", tables.n_sites)

port = tables.inlet_ports[0]
U_lat = U * dt / dx
R = cyl.radius
shape = 2.0 * (1.0 - (port.radii / R) ** 2)
shape = np.clip(shape, 0.0, None)
n_steps = 24000
ramp = np.minimum(np.arange(n_steps + 1) / 2000.0, 1.0)
sched = lbm.BoundarySchedule(
    inlets=[lbm.InletSchedule(0, shape, U_lat * ramp)],
    n_steps=n_steps,
)

state = lbm.initialize(tables, units)
centers = tables.centers()
axis_pt = np.array(cyl.center)
r_all = np.sqrt(centers[:, 1] ** 2 + centers[:, 2] ** 2)
x_all = centers[:, 0]

t0 = time.time()
for chunk in range(8):
    for _ in range(n_steps // 8):
        lbm.step(state, sched)
    rho, u = state.macroscopics()
    # mid-tube cross-section
    mid = np.abs(x_all - 20 * dx) <= 0.51 * dx
    ua = u[mid, 0] * units.velocity_scale
    r = r_all[mid]
    exact = 2 * U * (1 - (r / R) ** 2)
    l2 = np.sqrt(np.sum((ua - exact) ** 2) / np.sum(exact**2))
    print(f"step {state.step}: L2 = {l2:.5f}, max u = {ua.max():.4f} (exact {2*U:.4f})")
print("wall time", time.time() - t0)

# WSS check at wall sites away from the ends
from hemoflow import _kernels

wall = np.nonzero(tables.kinds == 1)[0]
keep = (x_all[wall] > 5 * dx) & (x_all[wall] < 35 * dx)
wall = wall[keep]
out = np.empty((wall.size, 6))
_kernels.deviatoric_stress(state.f, wall, state.tau, out)
normals = tables.wall_normals[wall]
sig = np.empty((wall.size, 3, 3))
sig[:, 0, 0], sig[:, 1, 1], sig[:, 2, 2] = out[:, 0], out[:, 1], out[:, 2]
sig[:, 0, 1] = sig[:, 1, 0] = out[:, 3]
sig[:, 0, 2] = sig[:, 2, 0] = out[:, 4]
sig[:, 1, 2] = sig[:, 2, 1] = out[:, 5]
trac = np.einsum("nij,nj->ni", sig, normals)
tn = np.einsum("ni,ni->n", trac, normals)
tang = trac - tn[:, None] * normals
wss_lat = np.linalg.norm(tang, axis=1)
wss = wss_lat * BLOOD.density * units.velocity_scale**2
expect = 4 * BLOOD.dynamic_viscosity * U / R
print("WSS expect", expect)
rr = r_all[wall]
site_expect = expect * rr / R
rel = (wss - site_expect) / site_expect
print("site-level WSS rel err: mean %.4f  p5 %.4f p95 %.4f" % (rel.mean(), np.percentile(rel, 5), np.percentile(rel, 95)))
print("max site WSS", wss.max(), "rel to wall value:", wss.max() / expect - 1)
print("mean site WSS", wss.mean(), "rel:", wss.mean() / expect - 1)
# mean of top decile
top = np.sort(wss)[-wss.size // 10 :]
print("top-decile mean", top.mean(), "rel:", top.mean() / expect - 1)
