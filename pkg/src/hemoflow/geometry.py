"""Sparse voxel domains for vessel-like analytic shapes.

A domain is built by sampling an analytic implicit surface on a regular
grid (a voxel centre is fluid iff it lies strictly inside the surface),
classifying sites, and measuring the sub-voxel wall intersection
fraction q of every fluid->solid lattice link by bisection along the
link.  Domains round-trip through a little-endian binary file format
(magic ``HFGE``).
"""

from __future__ import annotations

import abc
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import BinaryIO

import numpy as np

from .lattice import C

FORMAT_MAGIC = b"HFGE"
FORMAT_VERSION = 1


class ResolutionTooCoarse(ValueError):
    """A vessel diameter spans fewer than the minimum number of voxels."""


class SurfaceMiss(RuntimeError):
    """A fluid->solid link has no surface intersection: classification is inconsistent."""


class CorruptHeader(IOError):
    """Geometry file is truncated or starts with the wrong magic."""


class FormatVersionMismatch(IOError):
    """Geometry file was written by an incompatible format version."""


class SiteKind(IntEnum):
    FLUID = 0
    WALL_FLUID = 1       # fluid with at least one solid link
    INLET = 2            # fluid on a velocity-inlet plane
    OUTLET = 3           # fluid on a pressure-outlet plane
    SOLID = 4


FLUID_KINDS = (SiteKind.FLUID, SiteKind.WALL_FLUID, SiteKind.INLET, SiteKind.OUTLET)

MIN_DIAMETER_VOXELS = 4


def _unit(v) -> tuple[float, float, float]:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"normal must be unit length, |n| = {n}")
    return (float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class InletSpec:
    """Velocity-inlet disk; ``normal`` points into the fluid domain."""

    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "normal", _unit(self.normal))
        if self.radius <= 0.0:
            raise ValueError("inlet radius must be positive")


@dataclass(frozen=True)
class OutletSpec:
    """Pressure-outlet disk; ``normal`` points into the fluid domain."""

    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "normal", _unit(self.normal))
        if self.radius <= 0.0:
            raise ValueError("outlet radius must be positive")


@dataclass
class LatticeDomain:
    """Sparse voxel grid with site classification and wall-link fractions.

    ``sites`` maps integer coordinates to a :class:`SiteKind` for every
    fluid site plus the one-layer solid shell around them.  ``wall_links``
    maps ``(coordinate, direction_index) -> q`` with q in (0, 1], the
    fraction of the link length at which the wall surface is crossed.
    A site coordinate ``(i, j, k)`` has its voxel centre at
    ``origin + (idx + 0.5) * voxel_size``.
    """

    dims: tuple[int, int, int]
    origin: tuple[float, float, float]
    voxel_size: float
    sites: dict[tuple[int, int, int], SiteKind]
    wall_links: dict[tuple[tuple[int, int, int], int], float]
    inlets: list[InletSpec]
    outlets: list[OutletSpec]
    # in-memory extras, not persisted
    wall_normals: dict = field(default_factory=dict, compare=False, repr=False)
    shape: "AnalyticShape | None" = field(default=None, compare=False, repr=False)
    periodic: tuple[bool, bool, bool] = field(
        default=(False, False, False), compare=False
    )

    def center(self, coord) -> np.ndarray:
        """World position of a site's voxel centre."""
        return np.asarray(self.origin) + (np.asarray(coord, dtype=float) + 0.5) * self.voxel_size

    def fluid_coords(self) -> list[tuple[int, int, int]]:
        return sorted(c for c, k in self.sites.items() if k != SiteKind.SOLID)

    @property
    def fluid_site_count(self) -> int:
        return sum(1 for k in self.sites.values() if k != SiteKind.SOLID)

    def validate(self) -> None:
        if self.fluid_site_count == 0:
            raise ValueError("domain has no fluid sites")
        for (coord, d), q in self.wall_links.items():
            if not (0.0 < q <= 1.0):
                raise ValueError(f"wall link q out of (0, 1]: {q} at {coord} dir {d}")
            if self.sites.get(coord) not in FLUID_KINDS:
                raise ValueError(f"wall link on non-fluid site {coord}")


# ---------------------------------------------------------------------------
# analytic shapes


@dataclass(frozen=True)
class Cap:
    """End-cap plane of a vessel; ``normal`` points into the fluid."""

    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    radius: float
    kind: str  # "inlet" | "outlet"


class AnalyticShape(abc.ABC):
    """Implicit vessel description: negative ``implicit`` values are inside
    the tube surface; end caps bound the domain axially."""

    @abc.abstractmethod
    def implicit(self, pts: np.ndarray) -> np.ndarray:
        """Signed radial distance field, (..., 3) -> (...); < 0 inside."""

    @abc.abstractmethod
    def caps(self) -> list[Cap]: ...

    @abc.abstractmethod
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box (lo, hi) of the fluid region."""

    @abc.abstractmethod
    def min_feature_diameter(self) -> float: ...

    @property
    def anchor(self) -> tuple[float, float, float]:
        """Point the voxelizer aligns to the grid (first cap centre)."""
        return self.caps()[0].point

    @property
    def periodic_axes(self) -> tuple[bool, bool, bool]:
        return (False, False, False)

    def inside(self, pts: np.ndarray) -> np.ndarray:
        """Strictly inside the surface and strictly between all caps."""
        pts = np.asarray(pts, dtype=float)
        mask = self.implicit(pts) < 0.0
        for cap in self.caps():
            s = (pts - np.asarray(cap.point)) @ np.asarray(cap.normal)
            mask &= s > 0.0
        return mask

    def surface_normal(self, pts: np.ndarray, h: float) -> np.ndarray:
        """Outward unit normal via central differences of the implicit field."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        grad = np.empty_like(pts)
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            grad[:, a] = (self.implicit(pts + e) - self.implicit(pts - e)) / (2 * h)
        norm = np.linalg.norm(grad, axis=1, keepdims=True)
        norm[norm == 0.0] = 1.0
        return grad / norm

    def port_specs(self) -> tuple[list[InletSpec], list[OutletSpec]]:
        inlets, outlets = [], []
        for cap in self.caps():
            if cap.kind == "inlet":
                inlets.append(InletSpec(cap.point, cap.normal, cap.radius))
            else:
                outlets.append(OutletSpec(cap.point, cap.normal, cap.radius))
        return inlets, outlets


def _axes_complement(axis: int) -> tuple[int, int]:
    return tuple(a for a in range(3) if a != axis)  # type: ignore[return-value]


@dataclass(frozen=True)
class Cylinder(AnalyticShape):
    """Straight circular tube along a coordinate axis, with an optional
    smooth cosine constriction at mid-length.

    ``center`` is the centre of the inlet disk.  ``constriction`` is the
    fractional radius reduction at the waist (0 = straight tube).
    """

    radius: float
    length: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis: int = 0
    constriction: float = 0.0
    constriction_width: float | None = None

    def __post_init__(self):
        if self.radius <= 0.0 or self.length <= 0.0:
            raise ValueError("radius and length must be positive")
        if not (0.0 <= self.constriction < 1.0):
            raise ValueError("constriction must lie in [0, 1)")

    def _width(self) -> float:
        return self.constriction_width if self.constriction_width else self.length / 4.0

    def _radius_at(self, s: np.ndarray) -> np.ndarray:
        if self.constriction == 0.0:
            return np.full_like(s, self.radius)
        w = self._width()
        u = (s - 0.5 * self.length) / w
        bump = np.where(np.abs(u) < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.clip(u, -1, 1))), 0.0)
        return self.radius * (1.0 - self.constriction * bump)

    def implicit(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        local = pts - np.asarray(self.center)
        s = local[..., self.axis]
        t1, t2 = _axes_complement(self.axis)
        radial = np.sqrt(local[..., t1] ** 2 + local[..., t2] ** 2)
        return radial - self._radius_at(s)

    def caps(self) -> list[Cap]:
        e = np.zeros(3)
        e[self.axis] = 1.0
        c0 = np.asarray(self.center)
        return [
            Cap(tuple(c0), tuple(e), self.radius, "inlet"),
            Cap(tuple(c0 + self.length * e), tuple(-e), self.radius, "outlet"),
        ]

    def bounds(self):
        e = np.zeros(3)
        e[self.axis] = 1.0
        c0 = np.asarray(self.center)
        r = self.radius * (np.ones(3) - e)
        return np.minimum(c0 - r, c0 + self.length * e - r), np.maximum(
            c0 + r, c0 + self.length * e + r
        )

    def min_feature_diameter(self) -> float:
        return 2.0 * self.radius * (1.0 - self.constriction)


@dataclass(frozen=True)
class TorusSegment(AnalyticShape):
    """Quarter-bend tube in the x-y plane.

    Enters at ``center`` flowing along +x and exits flowing along +y, so
    both cap planes stay axis-aligned.
    """

    bend_radius: float
    tube_radius: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.tube_radius <= 0.0 or self.bend_radius <= self.tube_radius:
            raise ValueError("need bend_radius > tube_radius > 0")

    def implicit(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        ring = np.asarray(self.center) + np.array([0.0, self.bend_radius, 0.0])
        local = pts - ring
        s = np.sqrt(local[..., 0] ** 2 + local[..., 1] ** 2)
        return np.sqrt((s - self.bend_radius) ** 2 + local[..., 2] ** 2) - self.tube_radius

    def caps(self) -> list[Cap]:
        c0 = np.asarray(self.center)
        out_c = c0 + np.array([self.bend_radius, self.bend_radius, 0.0])
        return [
            Cap(tuple(c0), (1.0, 0.0, 0.0), self.tube_radius, "inlet"),
            Cap(tuple(out_c), (0.0, -1.0, 0.0), self.tube_radius, "outlet"),
        ]

    def bounds(self):
        c0 = np.asarray(self.center)
        r, rb = self.tube_radius, self.bend_radius
        lo = c0 + np.array([0.0, -r, -r])
        hi = c0 + np.array([rb + r, rb, r])
        return lo, hi

    def min_feature_diameter(self) -> float:
        return 2.0 * self.tube_radius


@dataclass(frozen=True)
class YBifurcation(AnalyticShape):
    """One trunk splitting into two daughter tubes.

    The trunk runs along +x; the daughters separate to +/-``half_separation``
    in y over the transition region and exit along +x, so the single inlet
    and both outlets sit on axis-aligned planes.
    """

    trunk_radius: float
    branch_radius: float
    trunk_length: float
    transition_length: float
    branch_length: float
    half_separation: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.branch_radius <= 0.0 or self.trunk_radius < self.branch_radius:
            raise ValueError("need trunk_radius >= branch_radius > 0")
        if self.half_separation <= self.branch_radius:
            raise ValueError("outlet disks overlap: half_separation must exceed branch_radius")

    @property
    def total_length(self) -> float:
        return self.trunk_length + self.transition_length + self.branch_length

    def _offset(self, x: np.ndarray) -> np.ndarray:
        u = np.clip((x - self.trunk_length) / self.transition_length, 0.0, 1.0)
        return self.half_separation * u * u * (3.0 - 2.0 * u)

    def implicit(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        local = pts - np.asarray(self.center)
        x, y, z = local[..., 0], local[..., 1], local[..., 2]
        yc = self._offset(x)
        branch_hi = np.sqrt((y - yc) ** 2 + z**2) - self.branch_radius
        branch_lo = np.sqrt((y + yc) ** 2 + z**2) - self.branch_radius
        # trunk ends mid-transition; by then the daughters carry the lumen
        trunk = np.maximum(
            np.sqrt(y**2 + z**2) - self.trunk_radius,
            x - (self.trunk_length + 0.5 * self.transition_length),
        )
        return np.minimum(trunk, np.minimum(branch_hi, branch_lo))

    def caps(self) -> list[Cap]:
        c0 = np.asarray(self.center)
        l = self.total_length
        return [
            Cap(tuple(c0), (1.0, 0.0, 0.0), self.trunk_radius, "inlet"),
            Cap(
                tuple(c0 + np.array([l, self.half_separation, 0.0])),
                (-1.0, 0.0, 0.0),
                self.branch_radius,
                "outlet",
            ),
            Cap(
                tuple(c0 + np.array([l, -self.half_separation, 0.0])),
                (-1.0, 0.0, 0.0),
                self.branch_radius,
                "outlet",
            ),
        ]

    def inside(self, pts: np.ndarray) -> np.ndarray:
        # both outlet caps share the x = total_length plane
        pts = np.asarray(pts, dtype=float)
        local = pts - np.asarray(self.center)
        return (
            (self.implicit(pts) < 0.0)
            & (local[..., 0] > 0.0)
            & (local[..., 0] < self.total_length)
        )

    def bounds(self):
        c0 = np.asarray(self.center)
        half_y = self.half_separation + self.branch_radius
        r = max(self.trunk_radius, self.branch_radius)
        lo = c0 + np.array([0.0, -max(half_y, r), -r])
        hi = c0 + np.array([self.total_length, max(half_y, r), r])
        return lo, hi

    def min_feature_diameter(self) -> float:
        return 2.0 * self.branch_radius


@dataclass(frozen=True)
class PlaneChannel(AnalyticShape):
    """Parallel-plate channel, periodic in z.  Intended for solver
    verification; not exposed on the CLI and not persistable with its
    periodicity."""

    half_height: float
    length: float
    depth: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def implicit(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.abs(pts[..., 1] - self.center[1]) - self.half_height

    def caps(self) -> list[Cap]:
        c0 = np.asarray(self.center)
        r = max(self.half_height, self.depth)
        return [
            Cap(tuple(c0), (1.0, 0.0, 0.0), r, "inlet"),
            Cap(tuple(c0 + np.array([self.length, 0.0, 0.0])), (-1.0, 0.0, 0.0), r, "outlet"),
        ]

    def bounds(self):
        c0 = np.asarray(self.center)
        lo = c0 + np.array([0.0, -self.half_height, 0.0])
        hi = c0 + np.array([self.length, self.half_height, self.depth])
        return lo, hi

    def min_feature_diameter(self) -> float:
        return 2.0 * self.half_height

    @property
    def periodic_axes(self):
        return (False, False, True)


# ---------------------------------------------------------------------------
# voxelizer


def _shift_mask(mask: np.ndarray, c, periodic) -> np.ndarray:
    """mask value at coordinate (idx + c), False (or wrapped) outside the grid."""
    out = mask
    for axis in range(3):
        step = int(c[axis])
        if step == 0:
            continue
        if periodic[axis]:
            out = np.roll(out, -step, axis=axis)
        else:
            shifted = np.zeros_like(out)
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if step > 0:
                src[axis] = slice(step, None)
                dst[axis] = slice(None, -step)
            else:
                src[axis] = slice(None, step)
                dst[axis] = slice(-step, None)
            shifted[tuple(dst)] = out[tuple(src)]
            out = shifted
    return out


def voxelize_primitive(
    shape: AnalyticShape,
    voxel_size: float,
    align: str = "corner",
    margin_voxels: int = 3,
) -> LatticeDomain:
    """Voxelize an analytic shape into a classified sparse domain.

    A voxel centre is fluid iff it lies strictly inside the shape.  With
    ``align="corner"`` the shape anchor lands on a voxel corner (centres
    sample at half-integer offsets, avoiding degenerate on-surface
    sites); ``align="center"`` puts the anchor on a voxel centre.
    Wall-link fractions are computed before returning.
    """
    if voxel_size <= 0.0:
        raise ValueError("voxel_size must be positive")
    if shape.min_feature_diameter() < MIN_DIAMETER_VOXELS * voxel_size:
        raise ResolutionTooCoarse(
            f"minimum feature diameter {shape.min_feature_diameter():.3g} m spans fewer "
            f"than {MIN_DIAMETER_VOXELS} voxels at dx = {voxel_size:.3g} m"
        )
    if align not in ("corner", "center"):
        raise ValueError("align must be 'corner' or 'center'")

    dx = voxel_size
    anchor = np.asarray(shape.anchor, dtype=float)
    lo, hi = shape.bounds()
    periodic = shape.periodic_axes
    shift = 0.0 if align == "corner" else 0.5
    pad = margin_voxels * dx

    origin = np.empty(3)
    dims = np.empty(3, dtype=int)
    for a in range(3):
        if periodic[a]:
            span = hi[a] - lo[a]
            n = int(round(span / dx))
            if abs(n * dx - span) > 1e-9 * dx or n < 1:
                raise ValueError("periodic extent must be a whole number of voxels")
            origin[a] = lo[a]
            dims[a] = n
        else:
            n_lo = int(np.ceil((anchor[a] - (lo[a] - pad)) / dx - shift))
            origin[a] = anchor[a] - (n_lo + shift) * dx
            dims[a] = int(np.ceil((hi[a] + pad - origin[a]) / dx))

    nx, ny, nz = (int(d) for d in dims)
    ii, jj, kk = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
    )
    centers = np.stack(
        [
            origin[0] + (ii + 0.5) * dx,
            origin[1] + (jj + 0.5) * dx,
            origin[2] + (kk + 0.5) * dx,
        ],
        axis=-1,
    )

    fluid = shape.inside(centers)
    implicit = shape.implicit(centers)
    if not fluid.any():
        raise ValueError("shape produced no fluid sites")

    # one-layer solid shell: outside the surface, touching fluid
    touches_fluid = np.zeros_like(fluid)
    for q in range(1, 19):
        touches_fluid |= _shift_mask(fluid, C[q], periodic)
    solid = (~fluid) & (implicit >= 0.0) & touches_fluid

    kinds = np.full((nx, ny, nz), 255, dtype=np.uint8)
    kinds[solid] = SiteKind.SOLID
    kinds[fluid] = SiteKind.FLUID

    wall_adjacent = np.zeros_like(fluid)
    for q in range(1, 19):
        wall_adjacent |= _shift_mask(solid, C[q], periodic)
    kinds[fluid & wall_adjacent] = SiteKind.WALL_FLUID

    inlet_specs, outlet_specs = shape.port_specs()
    for cap in shape.caps():
        n = np.asarray(cap.normal)
        step = -np.rint(n).astype(int)  # one voxel through the cap
        if not np.allclose(n, -step, atol=1e-12):
            raise ValueError("cap normals must be axis-aligned")
        left_domain = fluid & ~_shift_mask(fluid, step, periodic)
        s = (centers - np.asarray(cap.point)) @ n
        layer = left_domain & (s > 0.0) & (s <= 1.5 * dx)
        kinds[layer] = SiteKind.INLET if cap.kind == "inlet" else SiteKind.OUTLET

    sites: dict[tuple[int, int, int], SiteKind] = {}
    occupied = np.argwhere(kinds != 255)
    for i, j, k in occupied:
        sites[(int(i), int(j), int(k))] = SiteKind(int(kinds[i, j, k]))

    domain = LatticeDomain(
        dims=(nx, ny, nz),
        origin=(float(origin[0]), float(origin[1]), float(origin[2])),
        voxel_size=dx,
        sites=sites,
        wall_links={},
        inlets=inlet_specs,
        outlets=outlet_specs,
        shape=shape,
        periodic=periodic,
    )
    for spec in inlet_specs + outlet_specs:
        if not _plane_has_fluid(domain, spec):
            raise ValueError(f"port plane at {spec.center} intersects no fluid site")
    compute_wall_links(domain, shape)
    return domain


def _plane_has_fluid(domain: LatticeDomain, spec) -> bool:
    n = np.asarray(spec.normal)
    p0 = np.asarray(spec.center)
    for coord, kind in domain.sites.items():
        if kind == SiteKind.SOLID:
            continue
        if abs((domain.center(coord) - p0) @ n) <= 1.25 * domain.voxel_size:
            return True
    return False


def compute_wall_links(domain: LatticeDomain, shape: AnalyticShape) -> LatticeDomain:
    """Populate ``domain.wall_links`` (and wall normals) from the analytic surface.

    For every fluid->solid link the crossing fraction q is located by
    bisection of the implicit field along the link; the link endpoint
    signs are checked first and a missing sign change raises
    :class:`SurfaceMiss`.
    """
    dx = domain.voxel_size
    origin = np.asarray(domain.origin)

    fluid_pts, solid_ends, keys = [], [], []
    for coord, kind in domain.sites.items():
        if kind == SiteKind.SOLID:
            continue
        base = np.asarray(coord)
        for q in range(1, 19):
            nb = tuple(int(x) for x in base + C[q])
            nb_wrapped = tuple(
                int(x % d) if p else int(x)
                for x, d, p in zip(base + C[q], domain.dims, domain.periodic)
            )
            if domain.sites.get(nb_wrapped) == SiteKind.SOLID:
                p0 = origin + (base + 0.5) * dx
                p1 = origin + (np.asarray(nb) + 0.5) * dx  # unwrapped world ray
                fluid_pts.append(p0)
                solid_ends.append(p1)
                keys.append((coord, q))

    domain.wall_links.clear()
    domain.wall_normals.clear()
    if not keys:
        return domain

    p0 = np.asarray(fluid_pts)
    p1 = np.asarray(solid_ends)
    f0 = shape.implicit(p0)
    f1 = shape.implicit(p1)
    bad = (f0 >= 0.0) | (f1 < 0.0)
    if bad.any():
        i = int(np.argmax(bad))
        raise SurfaceMiss(
            f"link {keys[i]} has no fluid->solid surface crossing "
            f"(implicit endpoints {f0[i]:.3g}, {f1[i]:.3g})"
        )

    lo = np.zeros(len(keys))
    hi = np.ones(len(keys))
    seg = p1 - p0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = shape.implicit(p0 + mid[:, None] * seg)
        take_hi = fm >= 0.0
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
    qvals = 0.5 * (lo + hi)

    best: dict[tuple[int, int, int], tuple[float, int]] = {}
    for idx, (key, qv) in enumerate(zip(keys, qvals)):
        coord, d = key
        domain.wall_links[key] = float(qv)
        if domain.sites[coord] == SiteKind.FLUID:
            domain.sites[coord] = SiteKind.WALL_FLUID
        cur = best.get(coord)
        if cur is None or qv < cur[0]:
            best[coord] = (float(qv), idx)

    # wall normal at each wall-adjacent site: surface normal at the
    # closest link crossing
    coords = list(best)
    hits = np.array([p0[best[c][1]] + best[c][0] * seg[best[c][1]] for c in coords])
    normals = shape.surface_normal(hits, h=1e-4 * dx)
    for c, n in zip(coords, normals):
        domain.wall_normals[c] = (float(n[0]), float(n[1]), float(n[2]))
    return domain


# ---------------------------------------------------------------------------
# file format

_HEADER = struct.Struct("<4sI3Id3dQHH")
_SITE_FIXED = struct.Struct("<3IBB")
_LINK = struct.Struct("<Bf")
_PORT = struct.Struct("<3d3ddB")

_PORT_KIND_INLET = 0
_PORT_KIND_OUTLET = 1


def write_domain(domain: LatticeDomain, path) -> None:
    """Write a domain in the binary geometry format (q rounded to f32)."""
    links_by_site: dict[tuple[int, int, int], list[tuple[int, float]]] = {}
    for (coord, d), q in domain.wall_links.items():
        links_by_site.setdefault(coord, []).append((d, q))

    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                FORMAT_MAGIC,
                FORMAT_VERSION,
                *domain.dims,
                domain.voxel_size,
                *domain.origin,
                len(domain.sites),
                len(domain.inlets),
                len(domain.outlets),
            )
        )
        for coord in sorted(domain.sites):
            kind = domain.sites[coord]
            links = sorted(links_by_site.get(coord, ()))
            fh.write(_SITE_FIXED.pack(*coord, int(kind), len(links)))
            for d, q in links:
                fh.write(_LINK.pack(d, q))
        for spec in domain.inlets:
            fh.write(_PORT.pack(*spec.center, *spec.normal, spec.radius, _PORT_KIND_INLET))
        for spec in domain.outlets:
            fh.write(_PORT.pack(*spec.center, *spec.normal, spec.radius, _PORT_KIND_OUTLET))


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CorruptHeader(f"file truncated: wanted {n} bytes, got {len(buf)}")
    return buf


def read_domain(path) -> LatticeDomain:
    """Read a domain written by :func:`write_domain`."""
    with open(path, "rb") as fh:
        magic, version, dx_, dy_, dz_, vox, ox, oy, oz, nsites, nin, nout = _HEADER.unpack(
            _read_exact(fh, _HEADER.size)
        )
        if magic != FORMAT_MAGIC:
            raise CorruptHeader(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatVersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")

        sites: dict[tuple[int, int, int], SiteKind] = {}
        wall_links: dict[tuple[tuple[int, int, int], int], float] = {}
        for _ in range(nsites):
            x, y, z, kind, nlinks = _SITE_FIXED.unpack(_read_exact(fh, _SITE_FIXED.size))
            coord = (x, y, z)
            try:
                sites[coord] = SiteKind(kind)
            except ValueError as exc:
                raise CorruptHeader(f"unknown site kind {kind}") from exc
            for _ in range(nlinks):
                d, q = _LINK.unpack(_read_exact(fh, _LINK.size))
                wall_links[(coord, d)] = float(q)

        inlets: list[InletSpec] = []
        outlets: list[OutletSpec] = []
        for _ in range(nin + nout):
            vals = _PORT.unpack(_read_exact(fh, _PORT.size))
            center, normal, radius, kind = vals[0:3], vals[3:6], vals[6], vals[7]
            if kind == _PORT_KIND_INLET:
                inlets.append(InletSpec(center, normal, radius))
            elif kind == _PORT_KIND_OUTLET:
                outlets.append(OutletSpec(center, normal, radius))
            else:
                raise CorruptHeader(f"unknown port kind {kind}")
        if len(inlets) != nin or len(outlets) != nout:
            raise CorruptHeader("port records do not match header counts")

    return LatticeDomain(
        dims=(dx_, dy_, dz_),
        origin=(ox, oy, oz),
        voxel_size=vox,
        sites=sites,
        wall_links=wall_links,
        inlets=inlets,
        outlets=outlets,
    )
