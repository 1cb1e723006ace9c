"""Flow measurement during runs: plane probes and wall shear stress.

Extractors observe a quiesced solver state between steps at a fixed
step cadence, convert to physical units, and append to deterministic
CSV artifacts (full 17-significant-digit precision, canonical site
ordering).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import SiteKind
from .lattice import C
from .lbm import LbState, SiteTables
from .units import (
    FluidProperties,
    LatticeUnits,
    to_physical_pressure,
)

PROBE_CSV_HEADER = "step,t_s,v_max_m_s,v_mean_m_s,p_mean_pa"
WSS_CSV_HEADER = "x,y,z,wss_pa"


class EmptyPlane(ValueError):
    """A probe plane intersects no fluid site."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass(frozen=True)
class ProbePlane:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]


@dataclass
class ProbeRecord:
    step: int
    t_s: float
    v_max_m_s: float
    v_mean_m_s: float
    p_mean_pa: float


def plane_site_mask(tables: SiteTables, plane: ProbePlane) -> np.ndarray:
    """Fluid sites within half a voxel of the plane."""
    centers = tables.centers()
    n = np.asarray(plane.normal, dtype=float)
    n = n / np.linalg.norm(n)
    s = (centers - np.asarray(plane.point)) @ n
    mask = np.abs(s) <= 0.5 * tables.voxel_size * (1.0 - 1e-9)
    if not mask.any():
        raise EmptyPlane(f"probe plane at {plane.point} intersects no fluid site")
    return mask


def snap_plane(tables: SiteTables, point, normal) -> ProbePlane:
    """Align an axis-aligned plane with the nearest layer of voxel centres.

    Avoids the ambiguous half-voxel case where a plane sits exactly
    between two site layers.
    """
    n = np.asarray(normal, dtype=float)
    axis = int(np.argmax(np.abs(n)))
    if abs(abs(n[axis]) - np.linalg.norm(n)) > 1e-9:
        raise ValueError("snap_plane needs an axis-aligned normal")
    p = np.asarray(point, dtype=float).copy()
    o = tables.origin[axis]
    dx = tables.voxel_size
    layer = round((p[axis] - o) / dx - 0.5)
    p[axis] = o + (layer + 0.5) * dx
    return ProbePlane(tuple(p), tuple(n / np.linalg.norm(n)))


def probe_plane(
    state: LbState,
    plane: ProbePlane,
    units: LatticeUnits,
    fluid: FluidProperties,
    mask: np.ndarray | None = None,
) -> ProbeRecord:
    """Max/mean velocity and mean pressure over the plane's sites.

    v_max is the largest velocity magnitude; v_mean the mean velocity
    component along the plane normal (signed, so it integrates to a
    flux); pressure is gauge (zero at lattice density 1).
    """
    tables = state.tables
    if mask is None:
        mask = plane_site_mask(tables, plane)
    rho, u = state.rho, state.u
    n = np.asarray(plane.normal, dtype=float)
    n = n / np.linalg.norm(n)
    speed = np.linalg.norm(u[mask], axis=1)
    v_max = float(speed.max()) * units.velocity_scale
    v_mean = float((u[mask] @ n).mean()) * units.velocity_scale
    p_mean = to_physical_pressure(float(rho[mask].mean()), units, fluid)
    return ProbeRecord(
        step=state.step,
        t_s=state.step * units.dt,
        v_max_m_s=v_max,
        v_mean_m_s=v_mean,
        p_mean_pa=p_mean,
    )


def plane_flux(
    state: LbState,
    plane: ProbePlane,
    units: LatticeUnits,
    mask: np.ndarray | None = None,
) -> float:
    """Volumetric flux through the plane [m^3/s], momentum-weighted."""
    tables = state.tables
    if mask is None:
        mask = plane_site_mask(tables, plane)
    n = np.asarray(plane.normal, dtype=float)
    n = n / np.linalg.norm(n)
    rho, u = state.rho, state.u
    ju = (rho[mask, None] * u[mask]) @ n
    return float(ju.sum()) * units.velocity_scale * tables.voxel_size**2


# ---------------------------------------------------------------------------
# wall shear stress


def wall_site_indices(tables: SiteTables) -> np.ndarray:
    """Wall-adjacent fluid sites, excluding sites on inlet/outlet planes."""
    has_wall = np.any(tables.nbr == -1, axis=1)
    return np.nonzero(has_wall & (tables.kinds == SiteKind.WALL_FLUID))[0]


def wall_normals_for(tables: SiteTables, sites: np.ndarray) -> np.ndarray:
    """Outward wall normal per site.

    Uses the analytic-surface normals carried by the domain when
    available; otherwise falls back to the inverse-q weighted mean of
    the solid-link directions (links whose wall crossing is closest
    dominate).
    """
    normals = np.zeros((sites.size, 3))
    have = np.zeros(sites.size, dtype=bool)
    if tables.wall_normals is not None:
        cand = tables.wall_normals[sites]
        have = ~np.isnan(cand).any(axis=1)
        normals[have] = cand[have]
    if not have.all():
        cdir = C.astype(float)
        cdir /= np.linalg.norm(C, axis=1, keepdims=True).clip(min=1.0)
        for k in np.nonzero(~have)[0]:
            i = sites[k]
            acc = np.zeros(3)
            for q in range(1, 19):
                if tables.nbr[i, q] == -1:
                    acc += cdir[q] / max(tables.qwall[i, q], 0.05)
            norm = np.linalg.norm(acc)
            normals[k] = acc / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
    return normals


@dataclass
class WssEvent:
    step: int
    t_s: float
    coords: np.ndarray   # (n, 3) int
    wss_pa: np.ndarray   # (n,)


def wall_shear_stress(
    state: LbState,
    units: LatticeUnits,
    fluid: FluidProperties,
    sites: np.ndarray | None = None,
    normals: np.ndarray | None = None,
) -> WssEvent:
    """WSS magnitude at every wall-adjacent fluid site [Pa].

    The deviatoric stress is assembled locally from the non-equilibrium
    populations, sigma = -(1 - 1/(2 tau)) sum f^neq c c; the wall
    traction sigma . n is projected tangentially and converted to Pa.
    """
    tables = state.tables
    if sites is None:
        sites = wall_site_indices(tables)
    if normals is None:
        normals = wall_normals_for(tables, sites)
    out = np.empty((sites.size, 6))
    _kernels.deviatoric_stress(state.f, sites, state.tau, out)
    sig = np.empty((sites.size, 3, 3))
    sig[:, 0, 0], sig[:, 1, 1], sig[:, 2, 2] = out[:, 0], out[:, 1], out[:, 2]
    sig[:, 0, 1] = sig[:, 1, 0] = out[:, 3]
    sig[:, 0, 2] = sig[:, 2, 0] = out[:, 4]
    sig[:, 1, 2] = sig[:, 2, 1] = out[:, 5]
    traction = np.einsum("nij,nj->ni", sig, normals)
    t_n = np.einsum("ni,ni->n", traction, normals)
    tangential = traction - t_n[:, None] * normals
    wss_lat = np.linalg.norm(tangential, axis=1)
    wss = wss_lat * fluid.density * units.velocity_scale**2
    return WssEvent(
        step=state.step,
        t_s=state.step * units.dt,
        coords=tables.coords[sites],
        wss_pa=wss,
    )


# ---------------------------------------------------------------------------
# extraction hooks


@dataclass
class PlaneProbeExtractor:
    """Appends one probe record per cadence event to a CSV file."""

    plane: ProbePlane
    cadence: int
    units: LatticeUnits
    fluid: FluidProperties
    path: Path | str | None = None
    records: list[ProbeRecord] = field(default_factory=list)
    _mask: np.ndarray | None = field(default=None, repr=False)

    def on_event(self, state: LbState) -> None:
        if self._mask is None:
            self._mask = plane_site_mask(state.tables, self.plane)
        rec = probe_plane(state, self.plane, self.units, self.fluid, self._mask)
        self.records.append(rec)

    def finalize(self) -> None:
        if self.path is None:
            return
        lines = [PROBE_CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.step},{_fmt(r.t_s)},{_fmt(r.v_max_m_s)},"
                f"{_fmt(r.v_mean_m_s)},{_fmt(r.p_mean_pa)}"
            )
        Path(self.path).write_text("\n".join(lines) + "\n")

    def artifacts(self) -> list[Path]:
        return [Path(self.path)] if self.path is not None else []

    def series(self) -> tuple[np.ndarray, np.ndarray]:
        """(t, v_max) arrays of the collected records."""
        t = np.array([r.t_s for r in self.records])
        v = np.array([r.v_max_m_s for r in self.records])
        return t, v


@dataclass
class WssExtractor:
    """Writes one ``wss_<step>.csv`` per cadence event."""

    cadence: int
    units: LatticeUnits
    fluid: FluidProperties
    out_dir: Path | str | None = None
    events: list[WssEvent] = field(default_factory=list)
    keep_events: bool = True
    _sites: np.ndarray | None = field(default=None, repr=False)
    _normals: np.ndarray | None = field(default=None, repr=False)
    _paths: list[Path] = field(default_factory=list, repr=False)

    def on_event(self, state: LbState) -> None:
        if self._sites is None:
            self._sites = wall_site_indices(state.tables)
            self._normals = wall_normals_for(state.tables, self._sites)
        event = wall_shear_stress(
            state, self.units, self.fluid, self._sites, self._normals
        )
        if self.keep_events:
            self.events.append(event)
        if self.out_dir is not None:
            out = Path(self.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"wss_{event.step}.csv"
            lines = [WSS_CSV_HEADER]
            for (x, y, z), w in zip(event.coords, event.wss_pa):
                lines.append(f"{x},{y},{z},{_fmt(w)}")
            path.write_text("\n".join(lines) + "\n")
            self._paths.append(path)

    def finalize(self) -> None:
        pass

    def artifacts(self) -> list[Path]:
        return list(self._paths)


def read_probe_csv(path) -> list[ProbeRecord]:
    rows = Path(path).read_text().strip().splitlines()
    if rows[0] != PROBE_CSV_HEADER:
        raise ValueError(f"not a probe CSV: {path}")
    out = []
    for row in rows[1:]:
        step, t, vmax, vmean, pmean = row.split(",")
        out.append(ProbeRecord(int(step), float(t), float(vmax), float(vmean), float(pmean)))
    return out


def read_wss_series(wss_dir) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load all wss_<step>.csv events from a directory.

    Returns (steps, coords, matrix) with matrix[site, event] in Pa;
    site coordinates must agree across events.
    """
    paths = sorted(Path(wss_dir).glob("wss_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise FileNotFoundError(f"no wss_<step>.csv files under {wss_dir}")
    steps = []
    coords_ref = None
    columns = []
    for path in paths:
        rows = path.read_text().strip().splitlines()
        if rows[0] != WSS_CSV_HEADER:
            raise ValueError(f"not a WSS CSV: {path}")
        data = np.array([[float(v) for v in row.split(",")] for row in rows[1:]])
        coords = data[:, :3].astype(int)
        if coords_ref is None:
            coords_ref = coords
        elif not np.array_equal(coords, coords_ref):
            raise ValueError(f"site set changed between WSS events in {wss_dir}")
        columns.append(data[:, 3])
        steps.append(int(path.stem.split("_")[1]))
    return np.array(steps), coords_ref, np.column_stack(columns)
