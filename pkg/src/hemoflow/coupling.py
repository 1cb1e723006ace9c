"""One-way 1D -> 3D coupling: waveform samples become per-step inlet
velocity profiles in lattice units.

Profiles are separable: a fixed spatial shape per inlet site times a
per-step mean-velocity scale resampled from the waveform, so linearity
in the waveform sample holds sitewise exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cardiac import Waveform
from .geometry import InletSpec, LatticeDomain
from .lbm import BoundarySchedule, InletSchedule, SiteTables, build_tables
from .units import MACH_ERROR, LatticeUnits, MachExceeded

#: fraction of a cardiac cycle over which the inlet ramps up from rest
WARMUP_CYCLE_FRACTION = 0.5


class EmptyWaveform(ValueError):
    """The waveform carries no samples."""


@dataclass
class InletProfile:
    """Spatial velocity profile over one inlet plane.

    ``shape`` is the per-site axial factor normalised to unit
    area-weighted mean, so the discrete plane mean equals the imposed
    mean velocity exactly; velocities point along the inward normal.
    """

    kind: str
    direction: np.ndarray
    site_indices: np.ndarray
    shape: np.ndarray
    mean_lattice_velocity: float
    port_index: int = 0

    @property
    def velocities(self) -> np.ndarray:
        """Per-site lattice velocity vectors, (n_sites, 3)."""
        axial = self.shape * self.mean_lattice_velocity
        return axial[:, None] * self.direction[None, :]

    def scaled(self, factor: float) -> "InletProfile":
        return InletProfile(
            self.kind, self.direction, self.site_indices, self.shape,
            self.mean_lattice_velocity * factor, self.port_index,
        )


def _port_for_inlet(tables: SiteTables, inlet: InletSpec) -> tuple[int, object]:
    for idx, port in enumerate(tables.inlet_ports):
        if port.spec == inlet:
            return idx, port
    raise ValueError(f"inlet {inlet.center} not found in domain tables")


def build_profile(
    sample: float,
    inlet: InletSpec,
    domain: LatticeDomain | SiteTables,
    units: LatticeUnits,
    kind: str = "poiseuille",
) -> InletProfile:
    """Spatial profile carrying mean velocity ``sample`` [m/s].

    ``poiseuille`` imposes u(r) = 2 U (1 - r^2/R^2); ``plug`` a uniform
    velocity inside the radius.  Either shape is rescaled so its
    discrete mean over the inlet sites is exactly U.  Raises
    MachExceeded when the converted peak reaches the lattice cap.
    """
    if sample < 0:
        raise ValueError("mean velocity sample must be >= 0")
    if kind not in ("poiseuille", "plug"):
        raise ValueError(f"unknown profile kind {kind!r}")
    tables = domain if isinstance(domain, SiteTables) else build_tables(domain)
    port_index, port = _port_for_inlet(tables, inlet)

    r = port.radii / inlet.radius
    if kind == "poiseuille":
        shape = np.clip(2.0 * (1.0 - r**2), 0.0, None)
    else:
        shape = (r <= 1.0).astype(float)
    mean = shape.mean()
    if mean <= 0:
        raise ValueError("profile shape vanishes on every inlet site")
    shape = shape / mean

    u_lat = sample * units.dt / units.dx
    peak = float(np.max(shape) * u_lat)
    if peak >= MACH_ERROR:
        raise MachExceeded(
            f"peak inlet lattice velocity {peak:.3f} >= {MACH_ERROR} "
            f"(mean {sample} m/s)"
        )
    return InletProfile(
        kind=kind,
        direction=np.asarray(inlet.normal, dtype=float),
        site_indices=port.sites,
        shape=shape,
        mean_lattice_velocity=u_lat,
        port_index=port_index,
    )


def schedule_from_waveform(
    waveform: Waveform,
    n_steps: int,
    units: LatticeUnits,
    profile: InletProfile,
    warmup: bool = True,
) -> BoundarySchedule:
    """Per-step inlet schedule resampled from a waveform.

    The waveform is linearly interpolated and extended periodically
    when the run is longer than its duration.  With ``warmup`` the
    first half cardiac cycle ramps linearly from rest (flagged in the
    schedule metadata).
    """
    if waveform.samples.size == 0:
        raise EmptyWaveform("waveform has no samples")
    if np.any(waveform.samples < 0):
        raise ValueError("waveform samples must be >= 0 for inlet scheduling")

    duration = waveform.duration_s
    t_wave = np.arange(waveform.samples.size + 1) * waveform.dt
    wrapped = np.append(waveform.samples, waveform.samples[0])

    t = np.arange(n_steps + 1) * units.dt
    v = np.interp(np.mod(t, duration), t_wave, wrapped)

    warmup_s = 0.0
    if warmup:
        warmup_s = WARMUP_CYCLE_FRACTION * waveform.period_s
        ramp = np.clip(t / warmup_s, 0.0, 1.0)
        v = v * ramp

    scales = v * units.dt / units.dx
    return BoundarySchedule(
        inlets=[InletSchedule(profile.port_index, profile.shape, scales)],
        n_steps=n_steps,
        metadata={
            "warmup_s": warmup_s,
            "waveform_duration_s": duration,
            "heart_rate_bpm": waveform.heart_rate,
            "profile_kind": profile.kind,
        },
    )


@dataclass
class ScheduleBundle:
    """Schedule plus the profile it was built from (per inlet)."""

    schedule: BoundarySchedule
    profiles: list[InletProfile] = field(default_factory=list)


def schedule_for_domain(
    waveform: Waveform,
    n_steps: int,
    units: LatticeUnits,
    tables: SiteTables,
    kind: str = "poiseuille",
    warmup: bool = True,
) -> ScheduleBundle:
    """Schedule every inlet of a domain from the same waveform."""
    profiles = []
    inlets = []
    warmup_s = 0.0
    for port in tables.inlet_ports:
        # the profile's Mach guard sees the waveform peak; the per-step
        # scale factors override its mean at run time
        profile = build_profile(waveform.peak(), port.spec, tables, units, kind=kind)
        sched = schedule_from_waveform(waveform, n_steps, units, profile, warmup=warmup)
        profiles.append(profile)
        inlets.append(sched.inlets[0])
        warmup_s = sched.metadata["warmup_s"]
    return ScheduleBundle(
        schedule=BoundarySchedule(
            inlets=inlets,
            n_steps=n_steps,
            metadata={
                "warmup_s": warmup_s,
                "heart_rate_bpm": waveform.heart_rate,
                "profile_kind": kind,
            },
        ),
        profiles=profiles,
    )
