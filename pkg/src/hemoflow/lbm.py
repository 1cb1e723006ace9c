"""D3Q19 BGK solver over a sparse voxel domain.

The domain is compiled once into flat site tables (coordinates,
neighbour indices, wall-link fractions, port site groups); the update
loop then runs collide -> stream (with interpolated wall closure) ->
velocity inlets -> pressure outlets.  The solver is deterministic:
identical inputs produce bit-identical population histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import _kernels
from .geometry import (
    FLUID_KINDS,
    InletSpec,
    LatticeDomain,
    OutletSpec,
    SiteKind,
)
from .lattice import C, CS2, OPPOSITE, Q, W  # noqa: F401  (module constants)
from .units import LatticeUnits

# lattice velocity magnitude caps: warn above MACH_SOFT, abort above MACH_HARD
MACH_SOFT = 0.1
MACH_HARD = 0.3


class Diverged(RuntimeError):
    """Solver state broke an invariant (finite populations, rho > 0, |u| < 0.3)."""

    def __init__(self, step: int, max_velocity: float, site: tuple[int, int, int]):
        self.step = step
        self.max_velocity = max_velocity
        self.site = site
        super().__init__(
            f"diverged at step {step}: max |u| = {max_velocity:.4g} at site {site}"
        )


class InletMachExceeded(ValueError):
    """An imposed inlet profile reaches the hard lattice-velocity cap."""


def equilibrium(rho, u) -> np.ndarray:
    """Second-order equilibrium populations for density rho and velocity u.

    Broadcasts over leading axes: rho (...,), u (..., 3) -> (..., 19).
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    cu = u @ C.T.astype(float)
    usq = np.sum(u * u, axis=-1)
    return W * rho[..., None] * (
        1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq[..., None]
    )


@dataclass
class PortSites:
    """Sites of one inlet/outlet plane, with its lattice orientation."""

    spec: InletSpec | OutletSpec
    sites: np.ndarray            # indices into the site tables
    axis: int                    # 0, 1 or 2
    sign: int                    # inward normal = sign * e_axis
    interior: np.ndarray | None  # per-site interior neighbour (outlets)
    radii: np.ndarray            # in-plane distance of each site to the port centre [m]


@dataclass
class SiteTables:
    """Flat, solver-ready form of a LatticeDomain."""

    coords: np.ndarray           # (N, 3) int32, lexicographically sorted
    kinds: np.ndarray            # (N,) uint8
    nbr: np.ndarray              # (N, 19) int64; -1 solid link, -2 open boundary
    qwall: np.ndarray            # (N, 19) float64, valid where nbr == -1
    inlet_ports: list[PortSites]
    outlet_ports: list[PortSites]
    voxel_size: float
    origin: np.ndarray
    dims: tuple[int, int, int]
    wall_normals: np.ndarray | None = None   # (N, 3), NaN rows where unknown

    @property
    def n_sites(self) -> int:
        return self.coords.shape[0]

    def centers(self) -> np.ndarray:
        return self.origin + (self.coords.astype(float) + 0.5) * self.voxel_size


def _port_orientation(normal) -> tuple[int, int]:
    n = np.asarray(normal, dtype=float)
    axis = int(np.argmax(np.abs(n)))
    if abs(abs(n[axis]) - 1.0) > 1e-9:
        raise ValueError(f"port normal {tuple(n)} is not axis-aligned")
    return axis, (1 if n[axis] > 0 else -1)


def build_tables(domain: LatticeDomain) -> SiteTables:
    """Compile a domain into flat site tables.

    Raises ValueError when a fluid site has an unclassified neighbour
    (neither fluid, solid shell, nor beyond its own port plane).
    """
    coords = sorted(c for c, k in domain.sites.items() if k != SiteKind.SOLID)
    if not coords:
        raise ValueError("domain has no fluid sites")
    n = len(coords)
    carr = np.array(coords, dtype=np.int32)
    kinds = np.array([domain.sites[c] for c in coords], dtype=np.uint8)

    dims = domain.dims
    index = np.full(dims, -3, dtype=np.int64)
    solid_mask = np.zeros(dims, dtype=bool)
    for c, k in domain.sites.items():
        if k == SiteKind.SOLID:
            solid_mask[c] = True
    index[tuple(carr.T)] = np.arange(n)

    nbr = np.full((n, Q), -2, dtype=np.int64)
    qwall = np.zeros((n, Q), dtype=np.float64)
    periodic = domain.periodic
    nbr[:, 0] = np.arange(n)
    for q in range(1, Q):
        tgt = carr.astype(np.int64) + C[q]
        for a in range(3):
            if periodic[a]:
                tgt[:, a] %= dims[a]
        inside = np.all((tgt >= 0) & (tgt < np.array(dims)), axis=1)
        code = np.full(n, -2, dtype=np.int64)
        ti = tgt[inside]
        flat = index[ti[:, 0], ti[:, 1], ti[:, 2]]
        is_solid = solid_mask[ti[:, 0], ti[:, 1], ti[:, 2]]
        vals = np.where(flat >= 0, flat, np.where(is_solid, -1, -2))
        code[inside] = vals
        nbr[:, q] = code
        for row in np.nonzero(code == -1)[0]:
            qkey = ((int(carr[row, 0]), int(carr[row, 1]), int(carr[row, 2])), q)
            qv = domain.wall_links.get(qkey)
            if qv is None:
                raise ValueError(f"missing wall link fraction for {qkey}")
            qwall[row, q] = qv

    # open (-2) links are only admissible through a site's own port plane
    interior_kinds = (kinds == SiteKind.FLUID) | (kinds == SiteKind.WALL_FLUID)
    leaky = interior_kinds & np.any(nbr == -2, axis=1)
    if leaky.any():
        bad = carr[int(np.nonzero(leaky)[0][0])]
        raise ValueError(
            f"interior fluid site {tuple(int(x) for x in bad)} has an unclassified neighbour"
        )

    centers = domain.origin + (carr.astype(float) + 0.5) * domain.voxel_size

    def _collect(specs, kind_value, with_interior):
        ports = []
        members = np.nonzero(kinds == kind_value)[0]
        if len(specs) == 0:
            if members.size:
                raise ValueError("domain has port sites but no port specs")
            return ports
        # assign each port site to the nearest spec centre
        centres = np.array([s.center for s in specs])
        d2 = ((centers[members, None, :] - centres[None, :, :]) ** 2).sum(axis=2)
        owner = np.argmin(d2, axis=1)
        for pi, spec in enumerate(specs):
            sites = members[owner == pi]
            if sites.size == 0:
                raise ValueError(f"port at {spec.center} has no sites")
            axis, sign = _port_orientation(spec.normal)
            interior = None
            if with_interior:
                step = np.zeros(3, dtype=np.int64)
                step[axis] = sign
                tgt = carr[sites].astype(np.int64) + step
                interior = index[tgt[:, 0], tgt[:, 1], tgt[:, 2]]
                if np.any(interior < 0):
                    raise ValueError(f"outlet at {spec.center} lacks interior neighbours")
            nvec = np.asarray(spec.normal)
            rel = centers[sites] - np.asarray(spec.center)
            rel -= (rel @ nvec)[:, None] * nvec
            radii = np.linalg.norm(rel, axis=1)
            ports.append(PortSites(spec, sites, axis, sign, interior, radii))
        return ports

    inlet_ports = _collect(domain.inlets, SiteKind.INLET, with_interior=False)
    outlet_ports = _collect(domain.outlets, SiteKind.OUTLET, with_interior=True)

    normals = None
    if domain.wall_normals:
        normals = np.full((n, 3), np.nan)
        lookup = {c: i for i, c in enumerate(coords)}
        for c, nv in domain.wall_normals.items():
            i = lookup.get(c)
            if i is not None:
                normals[i] = nv

    return SiteTables(
        coords=carr,
        kinds=kinds,
        nbr=nbr,
        qwall=qwall,
        inlet_ports=inlet_ports,
        outlet_ports=outlet_ports,
        voxel_size=domain.voxel_size,
        origin=np.asarray(domain.origin, dtype=float),
        dims=dims,
        wall_normals=normals,
    )


def periodic_box_tables(dims: tuple[int, int, int], voxel_size: float = 1.0) -> SiteTables:
    """Fully periodic all-fluid box (verification aid)."""
    nx, ny, nz = dims
    coords = np.array(
        [(i, j, k) for i in range(nx) for j in range(ny) for k in range(nz)],
        dtype=np.int32,
    )
    n = coords.shape[0]
    index = np.arange(n).reshape(dims)
    nbr = np.empty((n, Q), dtype=np.int64)
    for q in range(Q):
        tgt = (coords.astype(np.int64) + C[q]) % np.array(dims)
        nbr[:, q] = index[tgt[:, 0], tgt[:, 1], tgt[:, 2]]
    return SiteTables(
        coords=coords,
        kinds=np.full(n, SiteKind.FLUID, dtype=np.uint8),
        nbr=nbr,
        qwall=np.zeros((n, Q)),
        inlet_ports=[],
        outlet_ports=[],
        voxel_size=voxel_size,
        origin=np.zeros(3),
        dims=dims,
    )


def closed_box_tables(dims: tuple[int, int, int], voxel_size: float = 1.0) -> SiteTables:
    """All-wall box with half-way (q = 1/2) links on every face."""
    nx, ny, nz = dims
    coords = np.array(
        [(i, j, k) for i in range(nx) for j in range(ny) for k in range(nz)],
        dtype=np.int32,
    )
    n = coords.shape[0]
    index = np.arange(n).reshape(dims)
    nbr = np.full((n, Q), -1, dtype=np.int64)
    qwall = np.full((n, Q), 0.5)
    nbr[:, 0] = np.arange(n)
    for q in range(1, Q):
        tgt = coords.astype(np.int64) + C[q]
        inside = np.all((tgt >= 0) & (tgt < np.array(dims)), axis=1)
        ti = tgt[inside]
        vals = np.full(n, -1, dtype=np.int64)
        vals[inside] = index[ti[:, 0], ti[:, 1], ti[:, 2]]
        nbr[:, q] = vals
    kinds = np.full(n, SiteKind.WALL_FLUID, dtype=np.uint8)
    return SiteTables(
        coords=coords,
        kinds=kinds,
        nbr=nbr,
        qwall=qwall,
        inlet_ports=[],
        outlet_ports=[],
        voxel_size=voxel_size,
        origin=np.zeros(3),
        dims=dims,
    )


@dataclass
class InletSchedule:
    """Per-step drive of one inlet port.

    ``shape`` holds the per-site axial velocity factor at unit scale;
    ``scales[t]`` is the mean lattice velocity imposed when computing
    the state at time step t (length n_steps + 1, covering [0, n_steps]).
    """

    port_index: int
    shape: np.ndarray
    scales: np.ndarray


@dataclass
class BoundarySchedule:
    inlets: list[InletSchedule]
    n_steps: int
    outlet_density: float = 1.0
    metadata: dict = field(default_factory=dict)

    def validate(self, tables: SiteTables, n_steps: int | None = None) -> None:
        need = self.n_steps if n_steps is None else n_steps
        for sched in self.inlets:
            if sched.port_index >= len(tables.inlet_ports):
                raise ValueError("schedule references a missing inlet port")
            port = tables.inlet_ports[sched.port_index]
            if sched.shape.shape[0] != port.sites.size:
                raise ValueError("inlet shape does not match port site count")
            if len(sched.scales) < need + 1:
                raise ValueError(
                    f"inlet schedule covers {len(sched.scales) - 1} steps, "
                    f"run needs {need}"
                )
            peak = float(np.max(np.abs(sched.shape)) * np.max(np.abs(sched.scales)))
            if peak >= MACH_HARD:
                raise InletMachExceeded(
                    f"peak imposed lattice velocity {peak:.3f} >= {MACH_HARD}"
                )


@dataclass
class LbState:
    """Populations plus derived macroscopic caches at a time step."""

    tables: SiteTables
    tau: float
    f: np.ndarray
    step: int = 0
    rho: np.ndarray = None  # type: ignore[assignment]
    u: np.ndarray = None    # type: ignore[assignment]
    _scratch: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        n = self.tables.n_sites
        if self.rho is None:
            self.rho = np.ones(n)
        if self.u is None:
            self.u = np.zeros((n, 3))
        if self._scratch is None:
            self._scratch = np.empty_like(self.f)

    def macroscopics(self) -> tuple[np.ndarray, np.ndarray]:
        """Refresh and return the (rho, u) caches from the current populations."""
        _kernels.moments(self.f, self.rho, self.u)
        return self.rho, self.u

    def total_mass(self) -> float:
        return float(self.f.sum())


def initialize(tables: SiteTables, units: LatticeUnits, rho: float = 1.0) -> LbState:
    """State at rest equilibrium."""
    f = np.tile(W * rho, (tables.n_sites, 1))
    return LbState(tables=tables, tau=units.tau, f=f)


_TRANSVERSE = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def step(state: LbState, schedule: BoundarySchedule | None = None,
         wall_scheme: str = "bouzidi") -> LbState:
    """Advance one collide-stream-boundary cycle in place."""
    if wall_scheme not in ("bouzidi", "bounceback"):
        raise ValueError(f"unknown wall scheme {wall_scheme!r}")
    tables = state.tables
    f, f_post = state.f, state._scratch

    max_usq, bad = _kernels.collide(f, f_post, state.tau, state.rho, state.u)
    if bad >= 0:
        site = tuple(int(x) for x in tables.coords[bad])
        raise Diverged(state.step, float("nan"), site)
    if max_usq >= MACH_HARD * MACH_HARD:
        worst = int(np.argmax(np.sum(state.u * state.u, axis=1)))
        site = tuple(int(x) for x in tables.coords[worst])
        raise Diverged(state.step, float(np.sqrt(max_usq)), site)

    _kernels.stream(f, f_post, tables.nbr, tables.qwall, wall_scheme == "bouzidi")

    if schedule is not None:
        for sched in schedule.inlets:
            port = tables.inlet_ports[sched.port_index]
            t1, t2 = _TRANSVERSE[port.axis]
            ub = sched.shape * sched.scales[state.step + 1]
            _kernels.velocity_inlet(
                f, port.sites, port.axis, port.sign, t1, t2, ub
            )
    for port in tables.outlet_ports:
        _kernels.pressure_outlet(f, port.sites, port.interior)

    state.step += 1
    return state


class ExtractionHook(Protocol):
    cadence: int

    def on_event(self, state: LbState) -> None: ...


@dataclass
class RunResult:
    """Summary of a completed solver run."""

    steps: int
    final_mass: float
    peak_lattice_velocity: float
    events: int
    artifacts: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    state: LbState | None = None


def run(
    domain: LatticeDomain | SiteTables,
    schedule: BoundarySchedule | None,
    units: LatticeUnits,
    n_steps: int,
    extraction_hooks: Sequence[ExtractionHook] = (),
    wall_scheme: str = "bouzidi",
    state: LbState | None = None,
    progress: Callable[[int], None] | None = None,
) -> RunResult:
    """Run the solver for ``n_steps``, firing extraction hooks at their cadence.

    Hooks observe a quiesced state (between steps).  Raises
    :class:`Diverged` with the failing step when the state breaks an
    invariant, and :class:`InletMachExceeded` up front when the
    schedule's peak imposed velocity reaches the hard cap.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    tables = domain if isinstance(domain, SiteTables) else build_tables(domain)
    if schedule is not None:
        schedule.validate(tables, n_steps)
    if state is None:
        state = initialize(tables, units)

    peak = 0.0
    events = 0
    for _ in range(n_steps):
        step(state, schedule, wall_scheme)
        m = float(np.max(np.sum(state.u * state.u, axis=1)))
        if m > peak:
            peak = m
        for hook in extraction_hooks:
            if hook.cadence > 0 and state.step % hook.cadence == 0:
                state.macroscopics()
                hook.on_event(state)
                events += 1
        if progress is not None:
            progress(state.step)

    artifacts = []
    for hook in extraction_hooks:
        artifacts.extend(getattr(hook, "artifacts", lambda: [])())
    return RunResult(
        steps=n_steps,
        final_mass=state.total_mass(),
        peak_lattice_velocity=float(np.sqrt(peak)),
        events=events,
        artifacts=artifacts,
        metadata={"wall_scheme": wall_scheme, "tau": state.tau},
        state=state,
    )


def run_steady(
    domain: LatticeDomain | SiteTables,
    schedule: BoundarySchedule,
    units: LatticeUnits,
    max_steps: int,
    check_every: int = 500,
    tol: float = 1e-6,
    wall_scheme: str = "bouzidi",
) -> RunResult:
    """Step with a constant drive until the velocity field stops changing.

    Convergence is declared when the largest per-site velocity change
    over ``check_every`` steps falls below ``tol`` (lattice units).
    Returns early; the result's ``steps`` is the step count actually run.
    """
    tables = domain if isinstance(domain, SiteTables) else build_tables(domain)
    schedule.validate(tables, max_steps)
    state = initialize(tables, units)
    prev = None
    done = 0
    while done < max_steps:
        burst = min(check_every, max_steps - done)
        for _ in range(burst):
            step(state, schedule, wall_scheme)
        done += burst
        state.macroscopics()
        if prev is not None:
            delta = float(np.max(np.abs(state.u - prev)))
            if delta < tol:
                break
        prev = state.u.copy()
    return RunResult(
        steps=done,
        final_mass=state.total_mass(),
        peak_lattice_velocity=float(np.sqrt(np.max(np.sum(state.u**2, axis=1)))),
        events=0,
        metadata={"wall_scheme": wall_scheme, "tau": state.tau, "converged": done < max_steps},
        state=state,
    )
