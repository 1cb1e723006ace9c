"""Plan, execute, monitor, collect and analyze an ensemble of
per-configuration multiscale runs.

Every instance composes waveform generation -> inlet scheduling ->
lattice-Boltzmann run -> extraction, writing its artifacts under an
isolated result directory.  A persisted manifest tracks instance
status; execution is idempotent (completed instances are never redone)
and instance failures are isolated from one another.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import shutil
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import analysis, coupling, extraction, lbm
from .cardiac import (
    ArterialNetwork,
    PatientConfig,
    Waveform,
    calibrate_autoregulation,
    default_mca_network,
    simulate_network,
    write_waveform,
)
from .geometry import read_domain
from .units import FluidProperties, derive_lattice_units

STATUSES = ("planned", "running", "complete", "failed")
_TRANSITIONS = {
    ("planned", "running"),
    ("running", "complete"),
    ("running", "failed"),
}

MANIFEST_NAME = "manifest.txt"
CHECKSUM_INDEX = "checksums.sha256"
INSTANCE_ARTIFACTS = ("waveform.csv", "probe.csv", "run.json")


class DuplicateLabels(ValueError):
    """Two configurations share a label."""


class GeometryUnreadable(IOError):
    """The planned geometry file cannot be read."""


class MissingArtifact(RuntimeError):
    """A complete instance lacks a declared artifact."""


@dataclass(frozen=True)
class RunParams:
    """Solver and extraction parameters shared by ensemble instances.

    ``viscosity_scale`` multiplies the fluid viscosity to keep the
    lattice relaxation time away from its stability floor at desk-scale
    resolutions; it is recorded in every run's metadata.  With
    ``dt_s`` unset the time step is derived from ``mach_target`` and
    the waveform peak.
    """

    fluid_density: float = 1050.0
    fluid_viscosity: float = 3.5e-3
    viscosity_scale: float = 1.0
    mach_target: float = 0.12
    dt_s: float | None = None
    inflow: str = "pulsatile"          # "pulsatile" | "steady"
    cycles: float = 3.0                # simulated cardiac cycles after warm-up
    warmup: bool = True
    profile_kind: str = "poiseuille"
    cadence_s: float = 0.025
    probe_offset_m: float = 2.0e-3
    wall_scheme: str = "bouzidi"
    network_cycles: int = 10
    network_dt: float = 5e-3
    steady_max_steps: int = 40000
    steady_tol: float = 1e-6
    steady_ramp_steps: int = 1500
    steady_events: int = 3

    def fluid(self) -> FluidProperties:
        return FluidProperties(
            self.fluid_density, self.fluid_viscosity * self.viscosity_scale
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InstanceRecord:
    label: str
    status: str = "planned"
    config_hash: str = ""
    result_dir: str = ""
    wall_clock_s: float = 0.0
    steps: int = 0
    error: str = ""

    def transition(self, new_status: str) -> None:
        if new_status not in STATUSES:
            raise ValueError(f"unknown status {new_status!r}")
        if (self.status, new_status) not in _TRANSITIONS:
            raise ValueError(f"illegal transition {self.status} -> {new_status}")
        self.status = new_status


@dataclass
class EnsembleManifest:
    ensemble_id: str
    root: Path
    geometry: str
    geometry_sha256: str
    params: dict
    configs: list[dict]
    targets: dict[str, float]
    overrides: dict[str, dict]
    instances: dict[str, InstanceRecord]

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def instance_dir(self, label: str) -> Path:
        return self.root / "work" / label

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in STATUSES}
        for rec in self.instances.values():
            out[rec.status] += 1
        return out


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_manifest(manifest: EnsembleManifest) -> None:
    lines = [
        "[ensemble]",
        f"id = {manifest.ensemble_id}",
        f"geometry = {manifest.geometry}",
        f"geometry_sha256 = {manifest.geometry_sha256}",
        f"params_json = {json.dumps(manifest.params, sort_keys=True)}",
        f"configs_json = {json.dumps(manifest.configs, sort_keys=True)}",
        f"targets_json = {json.dumps(manifest.targets, sort_keys=True)}",
        f"overrides_json = {json.dumps(manifest.overrides, sort_keys=True)}",
    ]
    for label in sorted(manifest.instances):
        rec = manifest.instances[label]
        lines += [
            "",
            f"[instance {label}]",
            f"label = {rec.label}",
            f"status = {rec.status}",
            f"config_hash = {rec.config_hash}",
            f"result_dir = {rec.result_dir}",
            f"wall_clock_s = {rec.wall_clock_s:.17g}",
            f"steps = {rec.steps}",
            f"error = {json.dumps(rec.error)}",
        ]
    _atomic_write(manifest.path, "\n".join(lines) + "\n")


def load_manifest(root) -> EnsembleManifest:
    root = Path(root)
    text = (root / MANIFEST_NAME).read_text()
    section = None
    head: dict[str, str] = {}
    instances: dict[str, InstanceRecord] = {}
    current: dict[str, str] = {}

    def flush() -> None:
        if section and section.startswith("instance "):
            rec = InstanceRecord(
                label=current["label"],
                status=current["status"],
                config_hash=current["config_hash"],
                result_dir=current["result_dir"],
                wall_clock_s=float(current["wall_clock_s"]),
                steps=int(current["steps"]),
                error=json.loads(current["error"]),
            )
            instances[rec.label] = rec

    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            flush()
            section = line[1:-1]
            current = {}
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if section == "ensemble":
            head[key] = value
        else:
            current[key] = value
    flush()

    return EnsembleManifest(
        ensemble_id=head["id"],
        root=root,
        geometry=head["geometry"],
        geometry_sha256=head["geometry_sha256"],
        params=json.loads(head["params_json"]),
        configs=json.loads(head["configs_json"]),
        targets=json.loads(head["targets_json"]),
        overrides=json.loads(head["overrides_json"]),
        instances=instances,
    )


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_dict(config: PatientConfig) -> dict:
    return {
        "label": config.label,
        "intensity_pct_vt": config.intensity_pct_vt,
        "pressure_mmhg": config.pressure_mmhg,
        "cardiac_output_l_min": config.cardiac_output_l_min,
        "heart_rate_bpm": config.heart_rate_bpm,
    }


def plan(
    configs: list[PatientConfig],
    geometry_path,
    params: RunParams,
    out_root,
    targets: dict[str, float] | None = None,
    overrides: dict[str, RunParams] | None = None,
) -> EnsembleManifest:
    """Create (or re-create, deterministically) the ensemble manifest.

    The ensemble id is a content hash of the configurations, solver
    parameters, per-instance overrides, calibration targets and the
    geometry file bytes, so identical inputs always map to the same
    ensemble directory.
    """
    if not configs:
        raise ValueError("config list must not be empty")
    labels = [c.label for c in configs]
    if len(set(labels)) != len(labels):
        raise DuplicateLabels(f"duplicate config labels: {labels}")
    try:
        geometry_sha = _sha256_file(geometry_path)
        read_domain(geometry_path)
    except OSError as exc:
        raise GeometryUnreadable(f"cannot read geometry {geometry_path}: {exc}") from exc

    targets = dict(targets or {})
    overrides_d = {k: v.to_dict() for k, v in (overrides or {}).items()}
    payload = json.dumps(
        {
            "configs": [_config_dict(c) for c in configs],
            "params": params.to_dict(),
            "overrides": overrides_d,
            "targets": targets,
            "geometry_sha256": geometry_sha,
        },
        sort_keys=True,
    )
    ensemble_id = hashlib.sha256(payload.encode()).hexdigest()[:12]

    root = Path(out_root) / f"ensemble_{ensemble_id}"
    root.mkdir(parents=True, exist_ok=True)
    existing = root / MANIFEST_NAME
    if existing.exists():
        manifest = load_manifest(root)
        if manifest.ensemble_id == ensemble_id:
            return manifest

    instances = {}
    for c in configs:
        chash = hashlib.sha256(
            json.dumps(
                {
                    "config": _config_dict(c),
                    "params": overrides_d.get(c.label, params.to_dict()),
                    "target": targets.get(c.label),
                    "geometry_sha256": geometry_sha,
                },
                sort_keys=True,
            ).encode()
        ).hexdigest()[:12]
        instances[c.label] = InstanceRecord(
            label=c.label,
            config_hash=chash,
            result_dir=str(Path("work") / c.label),
        )
    manifest = EnsembleManifest(
        ensemble_id=ensemble_id,
        root=root,
        geometry=str(geometry_path),
        geometry_sha256=geometry_sha,
        params=params.to_dict(),
        configs=[_config_dict(c) for c in configs],
        targets=targets,
        overrides=overrides_d,
        instances=instances,
    )
    save_manifest(manifest)
    return manifest


# ---------------------------------------------------------------------------
# instance execution


def _params_from_dict(d: dict) -> RunParams:
    return RunParams(**d)


def _config_from_dict(d: dict) -> PatientConfig:
    return PatientConfig(**d)


def _probe_plane_for(tables: lbm.SiteTables, offset_m: float) -> extraction.ProbePlane:
    """Measurement plane ``offset_m`` inside the first outlet, snapped to
    the nearest site layer."""
    port = tables.outlet_ports[0]
    n = np.asarray(port.spec.normal)
    point = np.asarray(port.spec.center) + n * offset_m
    return extraction.snap_plane(tables, point, n)


def make_waveform(
    config: PatientConfig,
    params: RunParams,
    target: float | None = None,
    network: ArterialNetwork | None = None,
) -> Waveform:
    """Cardiac stage: one converged driving waveform for a configuration.

    Pulsatile mode emits the final (periodic) cycle of the network
    simulation; steady mode a constant waveform at the cycle-mean
    velocity.  A calibration target, when given, is matched first.
    """
    network = network or default_mca_network()
    if target is not None:
        factors = calibrate_autoregulation(
            [config], network, {config.label: target},
            cycles=params.network_cycles, dt=params.network_dt,
        )
        network = network.with_autoregulation(factors)
    wave_full = simulate_network(
        config, network, cycles=params.network_cycles, dt=params.network_dt
    )
    if params.inflow == "steady":
        return Waveform(
            dt=wave_full.dt,
            samples=np.full(wave_full.samples_per_cycle, wave_full.cycle_mean()),
            cycles=1,
            heart_rate=config.heart_rate_bpm,
        )
    return wave_full.last_cycles(1)


def derive_time_step(
    wave: Waveform, tables: lbm.SiteTables, dx: float, params: RunParams
) -> float:
    """Time step hitting ``mach_target`` at the profile's spatial peak."""
    if params.dt_s is not None:
        return params.dt_s
    port = tables.inlet_ports[0]
    r = port.radii / port.spec.radius
    raw = (
        np.clip(2.0 * (1.0 - r**2), 0.0, None)
        if params.profile_kind == "poiseuille"
        else (r <= 1.0).astype(float)
    )
    shape_peak = float(raw.max() / raw.mean())
    return params.mach_target * dx / (shape_peak * max(wave.peak(), 1e-12))


def run_lb(
    wave: Waveform,
    geometry_path,
    params: RunParams,
    out_dir,
    label: str = "",
    intensity_pct_vt: float = 0.0,
    target: float | None = None,
) -> dict:
    """3D stage: schedule the waveform onto the geometry's inlets, run
    the solver, and extract probe plus WSS artifacts into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    steady = params.inflow == "steady"

    domain = read_domain(geometry_path)
    tables = lbm.build_tables(domain)
    fluid = params.fluid()
    dx = domain.voxel_size
    dt = derive_time_step(wave, tables, dx, params)
    units = derive_lattice_units(dx, dt, fluid)

    cadence = max(1, int(round(params.cadence_s / dt)))
    plane = _probe_plane_for(tables, params.probe_offset_m)
    probe = extraction.PlaneProbeExtractor(
        plane=plane, cadence=cadence, units=units, fluid=fluid, path=out / "probe.csv"
    )
    wss = extraction.WssExtractor(
        cadence=cadence, units=units, fluid=fluid, out_dir=out / "wss", keep_events=False
    )

    if steady:
        n_extra = params.steady_events * cadence
        n_total = params.steady_max_steps + n_extra
        bundle = coupling.schedule_for_domain(
            wave, n_total, units, tables, kind=params.profile_kind, warmup=False
        )
        ramp = np.minimum(np.arange(n_total + 1) / params.steady_ramp_steps, 1.0)
        for sched in bundle.schedule.inlets:
            sched.scales = sched.scales * ramp
        res = lbm.run_steady(
            tables, bundle.schedule, units,
            max_steps=params.steady_max_steps,
            tol=params.steady_tol,
            wall_scheme=params.wall_scheme,
        )
        res = lbm.run(
            tables, bundle.schedule, units, n_steps=n_extra,
            extraction_hooks=[probe, wss], wall_scheme=params.wall_scheme,
            state=res.state,
        )
        warmup_s = 0.0
        steps_total = res.state.step
    else:
        period = wave.period_s
        warmup_s = coupling.WARMUP_CYCLE_FRACTION * period if params.warmup else 0.0
        duration = warmup_s + params.cycles * period
        n_steps = int(math.ceil(duration / dt))
        bundle = coupling.schedule_for_domain(
            wave, n_steps, units, tables, kind=params.profile_kind, warmup=params.warmup
        )
        res = lbm.run(
            tables, bundle.schedule, units, n_steps=n_steps,
            extraction_hooks=[probe, wss], wall_scheme=params.wall_scheme,
        )
        steps_total = res.steps
    probe.finalize()
    wss.finalize()

    meta = {
        "label": label,
        "intensity_pct_vt": intensity_pct_vt,
        "heart_rate_bpm": wave.heart_rate,
        "inflow": params.inflow,
        "dt_s": dt,
        "dx_m": dx,
        "tau": units.tau,
        "viscosity_scale": params.viscosity_scale,
        "steps": steps_total,
        "cadence_steps": cadence,
        "warmup_s": warmup_s,
        "peak_lattice_velocity": res.peak_lattice_velocity,
        "wall_scheme": params.wall_scheme,
        "profile_kind": params.profile_kind,
        "probe_plane": {"point": list(plane.point), "normal": list(plane.normal)},
        "autoregulation_target": target,
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def run_instance(
    config: PatientConfig,
    geometry_path,
    params: RunParams,
    out_dir,
    target: float | None = None,
    network: ArterialNetwork | None = None,
) -> dict:
    """Run one multiscale instance end to end; returns run metadata.

    Composition: calibrate (when a target is given) -> waveform ->
    inlet schedule -> lattice-Boltzmann run -> probe / WSS extraction.
    All artifacts land in ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wave = make_waveform(config, params, target=target, network=network)
    write_waveform(wave, out / "waveform.csv")
    return run_lb(
        wave,
        geometry_path,
        params,
        out,
        label=config.label,
        intensity_pct_vt=config.intensity_pct_vt,
        target=target,
    )


@dataclass
class ExecutionSummary:
    ran: list[str]
    skipped: list[str]
    failed: dict[str, str]
    wall_clock_s: float

    @property
    def failures(self) -> int:
        return len(self.failed)


class LocalExecutor:
    """Bounded thread pool running instances on this machine.

    Solver kernels release the GIL, so instances overlap effectively.
    """

    def run_all(self, jobs: list[tuple[str, callable]], max_workers: int) -> dict[str, str]:
        failures: dict[str, str] = {}
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = {pool.submit(fn): label for label, fn in jobs}
            for future, label in futures.items():
                try:
                    future.result()
                except Exception as exc:  # isolation: one failure must not abort others
                    failures[label] = f"{type(exc).__name__}: {exc}"
        return failures


class RemoteExecutorStub:
    """Placeholder for a batch-scheduler backend.

    Kept so a remote executor can be swapped in without manifest
    changes; it refuses to run anything.
    """

    def run_all(self, jobs, max_workers):
        raise NotImplementedError("remote execution backend is not configured")


def execute(
    manifest: EnsembleManifest,
    max_workers: int = 4,
    executor=None,
    network: ArterialNetwork | None = None,
) -> ExecutionSummary:
    """Run all incomplete instances; idempotent and failure-isolated.

    Completed instances are skipped; stale ``running`` records (from a
    killed process) are re-planned.  Returns normally whatever the
    per-instance outcomes; failures are recorded in the manifest.
    """
    if max_workers < 1:
        raise ValueError("max_workers must be >= 1")
    executor = executor or LocalExecutor()
    lock = threading.Lock()
    t0 = time.monotonic()

    for rec in manifest.instances.values():
        if rec.status == "running":  # crash leftovers are safe to redo
            rec.status = "planned"
        if rec.status == "failed":
            rec.status = "planned"
            rec.error = ""
    save_manifest(manifest)

    ran: list[str] = []
    skipped: list[str] = []
    jobs = []
    params_all = _params_from_dict(manifest.params)
    for cdict in manifest.configs:
        config = _config_from_dict(cdict)
        rec = manifest.instances[config.label]
        if rec.status == "complete" and _artifacts_present(manifest, rec):
            skipped.append(config.label)
            continue
        params = (
            _params_from_dict(manifest.overrides[config.label])
            if config.label in manifest.overrides
            else params_all
        )
        target = manifest.targets.get(config.label)

        def job(config=config, rec=rec, params=params, target=target):
            with lock:
                rec.transition("running")
                save_manifest(manifest)
            t_inst = time.monotonic()
            try:
                meta = run_instance(
                    config,
                    manifest.geometry,
                    params,
                    manifest.root / rec.result_dir,
                    target=target,
                    network=network,
                )
                with lock:
                    rec.steps = int(meta["steps"])
                    rec.wall_clock_s = time.monotonic() - t_inst
                    rec.transition("complete")
                    save_manifest(manifest)
                    ran.append(config.label)
            except Exception as exc:
                with lock:
                    rec.error = f"{type(exc).__name__}: {exc}"
                    rec.wall_clock_s = time.monotonic() - t_inst
                    rec.transition("failed")
                    save_manifest(manifest)
                raise

        jobs.append((config.label, job))

    failures = executor.run_all(jobs, max_workers) if jobs else {}
    ran_ok = [label for label in ran if label not in failures]
    return ExecutionSummary(
        ran=ran_ok,
        skipped=skipped,
        failed=dict(failures),
        wall_clock_s=time.monotonic() - t0,
    )


def _artifacts_present(manifest: EnsembleManifest, rec: InstanceRecord) -> bool:
    base = manifest.root / rec.result_dir
    if not all((base / name).exists() for name in INSTANCE_ARTIFACTS):
        return False
    return any((base / "wss").glob("wss_*.csv"))


# ---------------------------------------------------------------------------
# collection


@dataclass
class CollectResult:
    root: Path
    collected: list[str]
    missing: dict[str, str]
    absent: list[str]
    index_path: Path


def collect(manifest: EnsembleManifest, dest=None) -> CollectResult:
    """Curate completed instances into ``ensemble_<id>/<label>/`` with a
    checksum index; incomplete instances are listed, per-instance
    missing artifacts reported."""
    complete = [r for r in manifest.instances.values() if r.status == "complete"]
    if not complete:
        raise MissingArtifact("no complete instances to collect")
    dest_root = (
        Path(dest) / f"ensemble_{manifest.ensemble_id}" if dest else manifest.root / "results"
    )
    dest_root.mkdir(parents=True, exist_ok=True)

    collected: list[str] = []
    missing: dict[str, str] = {}
    index_lines: list[str] = []
    for rec in sorted(complete, key=lambda r: r.label):
        src = manifest.root / rec.result_dir
        if not _artifacts_present(manifest, rec):
            missing[rec.label] = f"artifacts missing under {src}"
            continue
        dst = dest_root / rec.label
        if dst.exists():
            shutil.rmtree(dst)
        shutil.copytree(src, dst)
        for path in sorted(dst.rglob("*")):
            if path.is_file():
                rel = path.relative_to(dest_root)
                index_lines.append(f"{_sha256_file(path)}  {rel.as_posix()}")
        collected.append(rec.label)

    index_path = dest_root / CHECKSUM_INDEX
    _atomic_write(index_path, "\n".join(index_lines) + "\n")
    absent = sorted(
        r.label for r in manifest.instances.values() if r.status != "complete"
    )
    return CollectResult(dest_root, collected, missing, absent, index_path)


def verify_collection(root) -> list[str]:
    """Re-hash a curated tree against its checksum index; returns mismatches."""
    root = Path(root)
    mismatches = []
    for line in (root / CHECKSUM_INDEX).read_text().strip().splitlines():
        digest, rel = line.split(maxsplit=1)
        path = root / rel
        if not path.exists():
            mismatches.append(f"{rel}: missing")
        elif _sha256_file(path) != digest:
            mismatches.append(f"{rel}: checksum mismatch")
    return mismatches


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class PipelineResult:
    manifest: EnsembleManifest
    summary: ExecutionSummary
    collection: CollectResult
    report: dict[str, Path]
    partial: bool

    @property
    def failures(self) -> int:
        return self.summary.failures


def pipeline(
    configs: list[PatientConfig],
    geometry_path,
    params: RunParams,
    out_root,
    targets: dict[str, float] | None = None,
    max_workers: int = 4,
    overrides: dict[str, RunParams] | None = None,
    network: ArterialNetwork | None = None,
) -> PipelineResult:
    """plan -> execute -> collect -> cross-instance report, end to end."""
    manifest = plan(configs, geometry_path, params, out_root, targets, overrides)
    summary = execute(manifest, max_workers=max_workers, network=network)
    collection = collect(manifest)

    results = []
    for cdict in manifest.configs:
        label = cdict["label"]
        if label not in collection.collected:
            continue
        run_meta = json.loads((collection.root / label / "run.json").read_text())
        results.append(
            analysis.InstanceResult(
                label=label,
                intensity_pct_vt=cdict["intensity_pct_vt"],
                heart_rate_bpm=cdict["heart_rate_bpm"],
                result_dir=collection.root / label,
                warmup_s=run_meta.get("warmup_s", 0.0),
                steady=run_meta.get("inflow") == "steady",
            )
        )
    absent = sorted(set(collection.absent) | set(collection.missing))
    report = analysis.cross_instance_report(
        results, collection.root / "report", missing=absent
    )
    return PipelineResult(
        manifest=manifest,
        summary=summary,
        collection=collection,
        report=report,
        partial=bool(absent),
    )
