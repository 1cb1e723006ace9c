"""Command-line surface over the library pipeline.

Verbs mirror the staged workflow: ``gen-waveforms`` (cardiac stage),
``gen-lb`` (convert waveforms into runnable specs), ``run`` (one 3D
instance), ``collect``, ``analyze``, ``ensemble`` (everything), plus
``voxelize`` for building geometries.  Exit codes: 0 success, 1 usage
error, 2 runtime error; ensemble verbs exit with the number of failed
instances.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, analysis, ensemble


def _workers_default() -> int:
    env = os.environ.get("HEMOFLOW_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steady", action="store_true", help="constant-inflow instances")
    p.add_argument("--cycles", type=float, default=3.0, help="cardiac cycles after warm-up")
    p.add_argument("--no-warmup", action="store_true", help="skip the inlet ramp")
    p.add_argument("--mach-target", type=float, default=0.12)
    p.add_argument("--viscosity-scale", type=float, default=1.0,
                   help="viscosity multiplier for desk-scale stability")
    p.add_argument("--dt-s", type=float, default=None, help="explicit time step [s]")
    p.add_argument("--cadence-s", type=float, default=0.025,
                   help="extraction interval [s]")
    p.add_argument("--probe-offset", type=float, default=2.0e-3,
                   help="probe plane distance inside the first outlet [m]")
    p.add_argument("--profile", choices=("poiseuille", "plug"), default="poiseuille")
    p.add_argument("--wall-scheme", choices=("bouzidi", "bounceback"), default="bouzidi")
    p.add_argument("--steady-max-steps", type=int, default=40000)


def _params_from_args(args) -> ensemble.RunParams:
    return ensemble.RunParams(
        viscosity_scale=args.viscosity_scale,
        mach_target=args.mach_target,
        dt_s=args.dt_s,
        inflow="steady" if args.steady else "pulsatile",
        cycles=args.cycles,
        warmup=not args.no_warmup,
        profile_kind=args.profile,
        cadence_s=args.cadence_s,
        probe_offset_m=args.probe_offset,
        wall_scheme=args.wall_scheme,
        steady_max_steps=args.steady_max_steps,
    )


def _load_targets(args, configs) -> dict[str, float] | None:
    from .cardiac import read_targets, reference_mca_targets

    if getattr(args, "targets", None):
        return read_targets(args.targets)
    if getattr(args, "calibrate", False):
        ref = reference_mca_targets()
        missing = [c.label for c in configs if c.label not in ref]
        if missing:
            raise ValueError(
                f"--calibrate uses the bundled reference targets; no target for {missing}"
            )
        return {c.label: ref[c.label] for c in configs}
    return None


def build_parser() -> _Parser:
    parser = _Parser(prog="hemoflow", description=__doc__)
    parser.add_argument("--version", action="version", version=f"hemoflow {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("voxelize", help="voxelize an analytic vessel shape")
    p.add_argument("--shape", required=True,
                   choices=("cylinder", "torus", "bifurcation"))
    p.add_argument("--voxel-size", type=float, required=True, help="[m]")
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, help="cylinder radius [m]")
    p.add_argument("--length", type=float, help="cylinder length [m]")
    p.add_argument("--constriction", type=float, default=0.0)
    p.add_argument("--constriction-width", type=float, default=None)
    p.add_argument("--bend-radius", type=float, help="torus bend radius [m]")
    p.add_argument("--tube-radius", type=float, help="torus tube radius [m]")
    p.add_argument("--trunk-radius", type=float)
    p.add_argument("--branch-radius", type=float)
    p.add_argument("--trunk-length", type=float)
    p.add_argument("--transition-length", type=float)
    p.add_argument("--branch-length", type=float)
    p.add_argument("--half-separation", type=float)

    p = sub.add_parser("gen-waveforms", help="generate per-config inflow waveforms")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--targets", help="CSV of label,mean_mca_velocity_m_s")
    p.add_argument("--calibrate", action="store_true",
                   help="calibrate against the bundled reference targets")
    p.add_argument("--steady", action="store_true")
    p.add_argument("--network-cycles", type=int, default=10)

    p = sub.add_parser("gen-lb", help="bundle waveforms + geometry into run specs")
    p.add_argument("--config", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--waveforms", required=True, help="directory from gen-waveforms")
    p.add_argument("--out", required=True)
    _add_param_flags(p)

    p = sub.add_parser("run", help="execute one run spec")
    p.add_argument("--runspec", required=True)

    p = sub.add_parser("collect", help="curate completed ensemble results")
    p.add_argument("--ensemble-dir", required=True,
                   help="ensemble_<id> directory containing the manifest")
    p.add_argument("--dest", default=None)

    p = sub.add_parser("analyze", help="cross-instance report from curated results")
    p.add_argument("--results", required=True, help="curated ensemble_<id> directory")
    p.add_argument("--out", default=None, help="report directory (default <results>/report)")

    p = sub.add_parser("ensemble", help="plan + execute + collect + analyze")
    p.add_argument("--config", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--targets")
    p.add_argument("--calibrate", action="store_true")
    _add_param_flags(p)

    return parser


def _cmd_voxelize(args) -> int:
    from . import geometry

    if args.shape == "cylinder":
        if args.radius is None or args.length is None:
            raise _UsageError("cylinder needs --radius and --length")
        shape = geometry.Cylinder(
            radius=args.radius, length=args.length,
            constriction=args.constriction,
            constriction_width=args.constriction_width,
        )
    elif args.shape == "torus":
        if args.bend_radius is None or args.tube_radius is None:
            raise _UsageError("torus needs --bend-radius and --tube-radius")
        shape = geometry.TorusSegment(
            bend_radius=args.bend_radius, tube_radius=args.tube_radius
        )
    else:
        needed = (args.trunk_radius, args.branch_radius, args.trunk_length,
                  args.transition_length, args.branch_length, args.half_separation)
        if any(v is None for v in needed):
            raise _UsageError(
                "bifurcation needs --trunk-radius --branch-radius --trunk-length "
                "--transition-length --branch-length --half-separation"
            )
        shape = geometry.YBifurcation(
            trunk_radius=args.trunk_radius, branch_radius=args.branch_radius,
            trunk_length=args.trunk_length, transition_length=args.transition_length,
            branch_length=args.branch_length, half_separation=args.half_separation,
        )
    domain = geometry.voxelize_primitive(shape, args.voxel_size)
    geometry.write_domain(domain, args.out)
    print(
        f"wrote {args.out}: {domain.fluid_site_count} fluid sites, "
        f"{len(domain.inlets)} inlet(s), {len(domain.outlets)} outlet(s)"
    )
    return 0


def _cmd_gen_waveforms(args) -> int:
    from .cardiac import read_configs, write_waveform

    configs = read_configs(args.config)
    targets = _load_targets(args, configs)
    params = ensemble.RunParams(
        inflow="steady" if args.steady else "pulsatile",
        network_cycles=args.network_cycles,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for config in configs:
        target = targets.get(config.label) if targets else None
        wave = ensemble.make_waveform(config, params, target=target)
        write_waveform(wave, out / f"{config.label}.csv")
        print(f"{config.label}: {wave.samples.size} samples, "
              f"mean {wave.samples.mean():.4f} m/s")
    return 0


def _cmd_gen_lb(args) -> int:
    from .cardiac import read_configs

    configs = read_configs(args.config)
    params = _params_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for config in configs:
        wave_path = Path(args.waveforms) / f"{config.label}.csv"
        if not wave_path.exists():
            raise FileNotFoundError(f"waveform for {config.label} missing: {wave_path}")
        spec = {
            "label": config.label,
            "intensity_pct_vt": config.intensity_pct_vt,
            "geometry": str(Path(args.geometry).resolve()),
            "waveform": str(wave_path.resolve()),
            "params": params.to_dict(),
            "out_dir": str((out / config.label).resolve()),
        }
        spec_path = out / f"{config.label}.runspec.json"
        spec_path.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
        print(f"wrote {spec_path}")
    return 0


def _cmd_run(args) -> int:
    from .cardiac import read_waveform

    spec = json.loads(Path(args.runspec).read_text())
    params = ensemble.RunParams(**spec["params"])
    wave = read_waveform(spec["waveform"])
    meta = ensemble.run_lb(
        wave, spec["geometry"], params, spec["out_dir"],
        label=spec.get("label", ""),
        intensity_pct_vt=spec.get("intensity_pct_vt", 0.0),
    )
    print(f"{spec.get('label', 'run')}: {meta['steps']} steps, tau {meta['tau']:.4f}, "
          f"peak lattice velocity {meta['peak_lattice_velocity']:.3f}")
    return 0


def _cmd_collect(args) -> int:
    manifest = ensemble.load_manifest(args.ensemble_dir)
    result = ensemble.collect(manifest, dest=args.dest)
    print(f"collected {len(result.collected)} instance(s) into {result.root}")
    for label, why in result.missing.items():
        print(f"  missing artifacts: {label}: {why}")
    if result.absent:
        print(f"  not complete: {', '.join(result.absent)}")
    return 0


def _cmd_analyze(args) -> int:
    root = Path(args.results)
    results = []
    for run_json in sorted(root.glob("*/run.json")):
        meta = json.loads(run_json.read_text())
        results.append(
            analysis.InstanceResult(
                label=meta["label"],
                intensity_pct_vt=meta["intensity_pct_vt"],
                heart_rate_bpm=meta["heart_rate_bpm"],
                result_dir=run_json.parent,
                warmup_s=meta.get("warmup_s", 0.0),
                steady=meta.get("inflow") == "steady",
            )
        )
    out = Path(args.out) if args.out else root / "report"
    report = analysis.cross_instance_report(results, out)
    print(f"report written under {out}")
    for name, path in report.items():
        print(f"  {name}: {path}")
    return 0


def _cmd_ensemble(args) -> int:
    from .cardiac import read_configs

    configs = read_configs(args.config)
    targets = _load_targets(args, configs)
    params = _params_from_args(args)
    workers = args.workers if args.workers else _workers_default()
    result = ensemble.pipeline(
        configs, args.geometry, params, args.out,
        targets=targets, max_workers=workers,
    )
    counts = result.manifest.counts()
    print(
        f"ensemble {result.manifest.ensemble_id}: "
        f"{counts['complete']} complete, {counts['failed']} failed "
        f"({result.summary.wall_clock_s:.1f} s)"
    )
    for label, err in result.summary.failed.items():
        print(f"  failed: {label}: {err}")
    for name, path in result.report.items():
        print(f"  {name}: {path}")
    return min(result.failures, 255)


_COMMANDS = {
    "voxelize": _cmd_voxelize,
    "gen-waveforms": _cmd_gen_waveforms,
    "gen-lb": _cmd_gen_lb,
    "run": _cmd_run,
    "collect": _cmd_collect,
    "analyze": _cmd_analyze,
    "ensemble": _cmd_ensemble,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.verb](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except analysis.IncompleteEnsemble as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
