"""Pulsatile inflow generation from patient exercise configurations.

A half-sine systolic ejection waveform, parameterised by mean pressure,
cardiac output and heart rate, drives a small lumped resistance /
compliance arterial tree with a designated middle-cerebral-artery (MCA)
terminal branch.  A per-configuration autoregulation factor on the
cerebral branch resistance is calibrated so that the cycle-mean MCA
velocity matches a measured target.  The emitted waveform is the mean
inlet velocity for the 3D solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

MMHG_PA = 133.322387415

#: exercise intensity assigned to the resting row when interpolating
#: toward the first measured intensity
REST_ANCHOR_PCT_VT = 10.0

SYSTOLE_FRACTION = 1.0 / 3.0


class NonMonotonicIntensities(ValueError):
    """Measured exercise intensities are not strictly increasing."""


class NetworkUnstable(RuntimeError):
    """Network integration produced NaN or negative converged output."""


class CalibrationFailed(RuntimeError):
    """No autoregulation factor in bounds reaches the target velocity."""


class UpsampleOnly(ValueError):
    """Resampling must go to a finer time step."""


@dataclass(frozen=True)
class PatientConfig:
    """One exercise-intensity row: label, % of ventilatory threshold
    (0 = rest), mean pressure [mmHg], cardiac output [L/min], heart
    rate [bpm]."""

    label: str
    intensity_pct_vt: float
    pressure_mmhg: float
    cardiac_output_l_min: float
    heart_rate_bpm: float

    def __post_init__(self):
        if self.intensity_pct_vt < 0:
            raise ValueError("intensity must be >= 0")
        if self.pressure_mmhg <= 0 or self.cardiac_output_l_min <= 0:
            raise ValueError("pressure and cardiac output must be positive")
        if not (30.0 <= self.heart_rate_bpm <= 220.0):
            raise ValueError(f"heart rate {self.heart_rate_bpm} outside [30, 220] bpm")

    @property
    def period_s(self) -> float:
        return 60.0 / self.heart_rate_bpm

    @property
    def mean_flow_m3s(self) -> float:
        return self.cardiac_output_l_min * 1e-3 / 60.0

    @property
    def stroke_volume_m3(self) -> float:
        return self.mean_flow_m3s * self.period_s

    @property
    def pressure_pa(self) -> float:
        return self.pressure_mmhg * MMHG_PA


def build_configs(
    rest: PatientConfig, measured: list[PatientConfig]
) -> list[PatientConfig]:
    """Complete the measured intensity ladder with 30% and 50% VT rows.

    The two extra rows are linear interpolations on the rest -> first
    measured segment, with rest placed at 10% VT.  Cardiac output is
    kept at 0.1 L/min precision, heart rate at whole bpm; pressure is
    rounded up to the next integer mmHg.
    """
    intensities = [c.intensity_pct_vt for c in measured]
    if any(b <= a for a, b in zip(intensities, intensities[1:])):
        raise NonMonotonicIntensities(f"measured intensities not increasing: {intensities}")
    if rest.intensity_pct_vt != 0:
        raise ValueError("rest row must have intensity 0")
    first = measured[0]
    if first.intensity_pct_vt <= REST_ANCHOR_PCT_VT:
        raise NonMonotonicIntensities(
            f"first measured intensity must exceed the rest anchor {REST_ANCHOR_PCT_VT}"
        )

    def lerp(pct: float) -> PatientConfig:
        t = (pct - REST_ANCHOR_PCT_VT) / (first.intensity_pct_vt - REST_ANCHOR_PCT_VT)
        p = rest.pressure_mmhg + t * (first.pressure_mmhg - rest.pressure_mmhg)
        co = rest.cardiac_output_l_min + t * (
            first.cardiac_output_l_min - rest.cardiac_output_l_min
        )
        hr = rest.heart_rate_bpm + t * (first.heart_rate_bpm - rest.heart_rate_bpm)
        return PatientConfig(
            label=f"{pct:.0f}vt",
            intensity_pct_vt=pct,
            pressure_mmhg=float(math.ceil(p - 1e-9)),
            cardiac_output_l_min=round(co, 1),
            heart_rate_bpm=float(round(hr)),
        )

    return [rest, lerp(30.0), lerp(50.0)] + list(measured)


def reference_configs() -> list[PatientConfig]:
    """Bundled exercise-study dataset: group-average rest row plus four
    measured intensities, completed by :func:`build_configs`."""
    rest = PatientConfig("rest", 0.0, 80.0, 4.8, 68.0)
    measured = [
        PatientConfig("70vt", 70.0, 100.0, 9.0, 101.0),
        PatientConfig("90vt", 90.0, 112.0, 10.7, 113.0),
        PatientConfig("110vt", 110.0, 116.0, 11.9, 120.0),
        PatientConfig("130vt", 130.0, 122.0, 13.2, 134.0),
    ]
    return build_configs(rest, measured)


def reference_mca_targets() -> dict[str, float]:
    """Cycle-mean right-MCA velocity targets [m/s] for the bundled dataset."""
    values = [0.460, 0.451, 0.428, 0.393, 0.371, 0.351, 0.339]
    return {c.label: v for c, v in zip(reference_configs(), values)}


# ---------------------------------------------------------------------------
# aortic inflow


def aortic_inflow(config: PatientConfig, t) -> np.ndarray | float:
    """Aortic volumetric flow [m^3/s] at time t [s].

    Periodic with period 60/HR: a half-sine ejection over the first
    third of the cycle, zero flow in diastole; the per-cycle integral
    equals the stroke volume CO/HR.
    """
    t = np.asarray(t, dtype=float)
    period = config.period_s
    systole = SYSTOLE_FRACTION * period
    phase = np.mod(t, period)
    q_peak = math.pi * config.stroke_volume_m3 / (2.0 * systole)
    flow = np.where(phase < systole, q_peak * np.sin(np.pi * phase / systole), 0.0)
    return float(flow) if flow.ndim == 0 else flow


# ---------------------------------------------------------------------------
# lumped arterial network


@dataclass(frozen=True)
class Segment:
    """Tree edge with resistance at the segment and optional compliance
    at its distal node.  Leaves drain to the venous reference (0 Pa).

    ``fit_to_config`` derives the resistance from mean pressure over
    cardiac output at simulation time; ``cerebral`` marks the branch
    scaled by the autoregulation factor; ``area`` is set on the MCA
    terminal so flow converts to velocity.
    """

    name: str
    resistance: float
    compliance: float = 0.0
    parent: str | None = None
    cerebral: bool = False
    fit_to_config: bool = False
    area: float | None = None


@dataclass
class ArterialNetwork:
    segments: list[Segment]
    mca: str
    autoregulation: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        names = [s.name for s in self.segments]
        if len(set(names)) != len(names):
            raise ValueError("duplicate segment names")
        by_name = {s.name: s for s in self.segments}
        roots = [s for s in self.segments if s.parent is None]
        if len(roots) != 1:
            raise ValueError("network must have exactly one root segment")
        for s in self.segments:
            if s.resistance <= 0 and not s.fit_to_config:
                raise ValueError(f"segment {s.name} resistance must be positive")
            if s.parent is not None and s.parent not in by_name:
                raise ValueError(f"segment {s.name} has unknown parent {s.parent}")
        mca = by_name.get(self.mca)
        if mca is None:
            raise ValueError(f"MCA segment {self.mca!r} missing")
        if mca.area is None or mca.area <= 0:
            raise ValueError("MCA segment needs a positive cross-section area")
        children = self.children()
        # the MCA terminates the named arterial tree: below it only the
        # lumped venous closure (resistive leaves) is allowed
        for kid in children.get(self.mca, []):
            if children.get(kid):
                raise ValueError("only a terminal venous load may follow the MCA")
        any_compliance = any(s.compliance > 0 for s in self.segments)
        if any_compliance:
            for s in self.segments:
                if children.get(s.name) and s.compliance <= 0:
                    raise ValueError(
                        f"internal segment {s.name} needs compliance (or drop "
                        "compliance everywhere for a purely resistive network)"
                    )

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {s.name: [] for s in self.segments}
        for s in self.segments:
            if s.parent is not None:
                out[s.parent].append(s.name)
        return out

    @property
    def mca_area(self) -> float:
        return next(s.area for s in self.segments if s.name == self.mca)

    def with_autoregulation(self, factors: dict[str, float]) -> "ArterialNetwork":
        return ArterialNetwork(self.segments, self.mca, dict(factors))


#: MCA lumen radius of 1.25 mm
MCA_AREA = math.pi * 1.25e-3**2


def default_mca_network() -> ArterialNetwork:
    """Systemic Windkessel feeding an MCA branch closed by a lumped
    venous load.

    The systemic terminal resistance is fitted per configuration from
    mean pressure over cardiac output.  The MCA segment itself has a
    fixed proximal resistance; the autoregulation factor acts on the
    distal (venous-side) resistance behind a smoothing compliance, so
    calibration moves the cycle-mean velocity while pulsatility keeps
    tracking the aortic pulse pressure.
    """
    return ArterialNetwork(
        segments=[
            Segment("aorta", resistance=1.0e6, compliance=3.6e-9),
            Segment("body", resistance=1.3e8, parent="aorta", fit_to_config=True),
            Segment(
                "mca", resistance=2.6e9, compliance=3.08e-11,
                parent="aorta", area=MCA_AREA,
            ),
            Segment(
                "cerebral_veins", resistance=2.12e9, parent="mca", cerebral=True,
            ),
        ],
        mca="mca",
    )


def _resolve(network: ArterialNetwork, config: PatientConfig) -> list[Segment]:
    factor = network.autoregulation.get(config.label, 1.0)
    resolved = []
    for s in network.segments:
        r = s.resistance
        if s.fit_to_config:
            r = config.pressure_pa / config.mean_flow_m3s
        if s.cerebral:
            r = r * factor
        resolved.append(replace(s, resistance=r))
    return resolved


@njit(cache=True, nogil=True)
def _integrate_rk4(
    comp_parent, comp_r, comp_c, leaf_parent, leaf_r,
    x0, q_peak, period, systole, dt, n_steps,
):
    """RK4 for node pressures of the compliant segments.

    comp_parent[i] is the state index feeding compliant segment i (-1
    for the root, which receives the aortic inflow directly);
    leaf_parent[j] the state feeding resistive leaf j.
    """
    n = x0.size
    hist = np.empty((n_steps + 1, n))
    hist[0] = x0
    x = x0.copy()
    k = np.empty((4, n))
    for stepi in range(n_steps):
        t0 = stepi * dt
        for stage in range(4):
            if stage == 0:
                ts, xs = t0, x
            elif stage == 1:
                ts, xs = t0 + 0.5 * dt, x + 0.5 * dt * k[0]
            elif stage == 2:
                ts, xs = t0 + 0.5 * dt, x + 0.5 * dt * k[1]
            else:
                ts, xs = t0 + dt, x + dt * k[2]
            phase = ts % period
            qin = q_peak * np.sin(np.pi * phase / systole) if phase < systole else 0.0
            for i in range(n):
                p = comp_parent[i]
                if p < 0:
                    inflow = qin
                else:
                    inflow = (xs[p] - xs[i]) / comp_r[i]
                out = 0.0
                for c in range(n):
                    if comp_parent[c] == i:
                        out += (xs[i] - xs[c]) / comp_r[c]
                for j in range(leaf_parent.size):
                    if leaf_parent[j] == i:
                        out += xs[i] / leaf_r[j]
                k[stage, i] = (inflow - out) / comp_c[i]
        for i in range(n):
            x[i] = x[i] + (dt / 6.0) * (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i])
        hist[stepi + 1] = x
    return hist


@dataclass
class Waveform:
    """Uniformly sampled mean inlet velocity [m/s] over whole cardiac cycles."""

    dt: float
    samples: np.ndarray
    cycles: int
    heart_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform samples must be finite")

    @property
    def period_s(self) -> float:
        return 60.0 / self.heart_rate

    @property
    def duration_s(self) -> float:
        return self.samples.size * self.dt

    @property
    def samples_per_cycle(self) -> int:
        return int(round(self.period_s / self.dt))

    def cycle_mean(self, last_cycles: int = 2) -> float:
        n = self.samples_per_cycle * last_cycles
        return float(self.samples[-n:].mean())

    def last_cycles(self, n: int = 1) -> "Waveform":
        take = self.samples_per_cycle * n
        return Waveform(self.dt, self.samples[-take:].copy(), n, self.heart_rate)

    def peak(self) -> float:
        return float(self.samples.max())


def _resistive_node_pressures(segments, children, q_mean: float) -> dict[str, float]:
    """Node pressures of the tree under steady inflow, compliances ignored."""
    by_name = {s.name: s for s in segments}

    def conductance(name: str) -> float:
        s = by_name[name]
        kids = children[name]
        if not kids:
            return 1.0 / s.resistance
        g_kids = sum(conductance(k) for k in kids)
        return 1.0 / (s.resistance + 1.0 / g_kids)

    root = next(s for s in segments if s.parent is None)
    pressures: dict[str, float] = {}
    pressures[root.name] = q_mean / sum(conductance(k) for k in children[root.name])

    def walk(name: str) -> None:
        p = pressures[name]
        for kid in children[name]:
            q = p * conductance(kid)
            pressures[kid] = p - q * by_name[kid].resistance
            walk(kid)

    walk(root.name)
    return pressures


def simulate_network(
    config: PatientConfig,
    network: ArterialNetwork,
    cycles: int = 10,
    dt: float = 5e-3,
) -> Waveform:
    """Integrate the network and return the MCA velocity waveform.

    The requested ``dt`` (at most 5 ms) is snapped down so a cardiac
    cycle spans a whole number of samples, which keeps the waveform
    exactly periodic under wrap-around.  Purely resistive networks are
    solved algebraically (instantaneous flow division by subtree
    conductance); otherwise the compliance-node pressures are
    integrated with RK4 from the resistive steady state.
    """
    if dt > 5e-3 + 1e-12:
        raise ValueError("network time step must be <= 5 ms")
    if cycles < 2:
        raise ValueError("need at least 2 cardiac cycles")
    segments = _resolve(network, config)
    by_name = {s.name: s for s in segments}
    children: dict[str, list[str]] = {s.name: [] for s in segments}
    for s in segments:
        if s.parent is not None:
            children[s.parent].append(s.name)

    period = config.period_s
    per_cycle = int(math.ceil(period / dt - 1e-9))
    dt = period / per_cycle
    systole = SYSTOLE_FRACTION * period
    n_steps = cycles * per_cycle
    t = np.arange(n_steps + 1) * dt
    q_peak = math.pi * config.stroke_volume_m3 / (2.0 * systole)

    if all(s.compliance == 0 for s in segments):
        mca_flow = _resistive_mca_flow(segments, children, by_name[network.mca]) * (
            aortic_inflow(config, t)
        )
    else:
        comp = [s for s in segments if s.compliance > 0]
        comp_index = {s.name: i for i, s in enumerate(comp)}
        comp_parent = np.array(
            [comp_index[s.parent] if s.parent is not None else -1 for s in comp],
            dtype=np.int64,
        )
        comp_r = np.array([s.resistance for s in comp])
        comp_c = np.array([s.compliance for s in comp])
        leaves = [s for s in segments if s.compliance == 0]
        for s in leaves:
            if children[s.name]:
                raise ValueError(f"non-compliant segment {s.name} must be a leaf")
        leaf_parent = np.array([comp_index[s.parent] for s in leaves], dtype=np.int64)
        leaf_r = np.array([s.resistance for s in leaves])
        steady = _resistive_node_pressures(segments, children, config.mean_flow_m3s)
        x0 = np.array([steady[s.name] for s in comp])
        hist = _integrate_rk4(
            comp_parent, comp_r, comp_c, leaf_parent, leaf_r,
            x0, q_peak, period, systole, dt, n_steps,
        )
        if not np.all(np.isfinite(hist)):
            raise NetworkUnstable(f"network integration produced NaN for {config.label}")
        if np.any(hist < 0.0):
            raise NetworkUnstable(
                f"negative node pressure (emptied compliance) for {config.label}"
            )
        mca_seg = by_name[network.mca]
        if mca_seg.compliance > 0:
            i = comp_index[network.mca]
            p_parent = hist[:, comp_parent[i]] if comp_parent[i] >= 0 else None
            mca_flow = (p_parent - hist[:, i]) / mca_seg.resistance
        else:
            mca_flow = hist[:, comp_index[mca_seg.parent]] / mca_seg.resistance

    velocity = mca_flow / network.mca_area
    return Waveform(
        dt=dt, samples=velocity[1:], cycles=cycles, heart_rate=config.heart_rate_bpm
    )


def _resistive_mca_flow(segments, children, mca_seg) -> float:
    """Fraction of the inflow carried by the MCA in an all-resistor tree."""

    def conductance(name: str) -> float:
        s = next(x for x in segments if x.name == name)
        kids = children[name]
        if not kids:
            return 1.0 / s.resistance
        g_kids = sum(conductance(k) for k in kids)
        if s.parent is None:
            return g_kids  # root resistance unused: inflow is a flow source
        return 1.0 / (s.resistance + 1.0 / g_kids)

    def fraction(name: str) -> float:
        s = next(x for x in segments if x.name == name)
        if s.parent is None:
            return 1.0
        siblings = children[s.parent]
        g_all = sum(conductance(k) for k in siblings)
        return fraction(s.parent) * conductance(name) / g_all

    return fraction(mca_seg.name)


def network_flow_residuals(
    config: PatientConfig,
    network: ArterialNetwork,
    waveform_hist: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Independent per-node conservation residuals for a pressure history.

    For each compliant node: inflow - outflows - C dP/dt, evaluated with
    centred differences at interior samples; returned normalised by the
    mean inflow.  Exercised by the verification suite.
    """
    segments = _resolve(network, config)
    by_name = {s.name: s for s in segments}
    children: dict[str, list[str]] = {s.name: [] for s in segments}
    for s in segments:
        if s.parent is not None:
            children[s.parent].append(s.name)
    comp = [s for s in segments if s.compliance > 0]
    comp_index = {s.name: i for i, s in enumerate(comp)}
    n_t = waveform_hist.shape[0]
    t = np.arange(n_t) * dt
    qin = aortic_inflow(config, t)
    scale = config.mean_flow_m3s
    res = np.zeros((n_t - 2, len(comp)))
    for s in comp:
        i = comp_index[s.name]
        p = waveform_hist[:, i]
        if s.parent is None:
            inflow = qin
        else:
            inflow = (waveform_hist[:, comp_index[s.parent]] - p) / s.resistance
        out = np.zeros(n_t)
        for kid in children[s.name]:
            ks = by_name[kid]
            if ks.compliance > 0:
                out += (p - waveform_hist[:, comp_index[kid]]) / ks.resistance
            else:
                out += p / ks.resistance
        dpdt = (p[2:] - p[:-2]) / (2 * dt)
        res[:, i] = (inflow[1:-1] - out[1:-1] - s.compliance * dpdt) / scale
    return res


def calibrate_autoregulation(
    configs: list[PatientConfig],
    network: ArterialNetwork,
    targets: dict[str, float],
    factor_bounds: tuple[float, float] = (0.1, 10.0),
    cycles: int = 10,
    dt: float = 5e-3,
) -> dict[str, float]:
    """Bisection on the cerebral-branch resistance factor, per config.

    Finds the factor whose simulated cycle-mean MCA velocity matches the
    target; raises CalibrationFailed when the target is unreachable
    inside ``factor_bounds``.
    """
    factors: dict[str, float] = {}
    lo_b, hi_b = factor_bounds
    for config in configs:
        target = targets[config.label]
        if target <= 0:
            raise ValueError(f"target velocity must be positive for {config.label}")

        def mean_velocity(factor: float) -> float:
            net = network.with_autoregulation({config.label: factor})
            return simulate_network(config, net, cycles=cycles, dt=dt).cycle_mean()

        v_lo = mean_velocity(lo_b)   # low resistance -> high velocity
        v_hi = mean_velocity(hi_b)
        if not (v_hi <= target <= v_lo):
            raise CalibrationFailed(
                f"{config.label}: target {target} m/s outside attainable "
                f"[{v_hi:.4f}, {v_lo:.4f}] for factors in [{lo_b}, {hi_b}]"
            )
        lo, hi = lo_b, hi_b
        for _ in range(55):
            mid = 0.5 * (lo + hi)
            if mean_velocity(mid) >= target:
                lo = mid  # velocity still above target: raise resistance
            else:
                hi = mid
            if hi - lo < 1e-9 * mid:
                break
        factors[config.label] = 0.5 * (lo + hi)
    return factors


def resample(waveform: Waveform, dt_target: float) -> Waveform:
    """Linear-interpolation resample onto a finer grid."""
    if dt_target >= waveform.dt:
        raise UpsampleOnly(
            f"dt_target {dt_target} must be finer than source dt {waveform.dt}"
        )
    t_old = np.arange(waveform.samples.size) * waveform.dt
    n_new = int(round(t_old[-1] / dt_target)) + 1
    t_new = np.arange(n_new) * dt_target
    samples = np.interp(t_new, t_old, waveform.samples)
    return Waveform(
        dt=dt_target, samples=samples, cycles=waveform.cycles,
        heart_rate=waveform.heart_rate,
    )


# ---------------------------------------------------------------------------
# file formats

_WAVEFORM_HEADER = "# hemoflow-waveform v1"


def write_waveform(waveform: Waveform, path) -> None:
    lines = [
        f"{_WAVEFORM_HEADER}, hr_bpm={waveform.heart_rate:.17g}, dt_s={waveform.dt:.17g}",
        "t_s,velocity_m_per_s",
    ]
    for k, v in enumerate(waveform.samples):
        lines.append(f"{k * waveform.dt:.17g},{v:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_waveform(path) -> Waveform:
    text = Path(path).read_text().strip().splitlines()
    header = text[0]
    if not header.startswith(_WAVEFORM_HEADER):
        raise ValueError(f"not a waveform file: {path}")
    meta = dict(
        item.strip().split("=") for item in header.split(",") if "=" in item
    )
    hr = float(meta["hr_bpm"])
    dt = float(meta["dt_s"])
    samples = np.array([float(row.split(",")[1]) for row in text[2:]])
    cycles = max(1, int(round(samples.size * dt / (60.0 / hr))))
    return Waveform(dt=dt, samples=samples, cycles=cycles, heart_rate=hr)


_CONFIG_KEYS = (
    "label",
    "intensity_pct_vt",
    "pressure_mmHg",
    "cardiac_output_l_min",
    "heart_rate_bpm",
)


def write_configs(configs: list[PatientConfig], path) -> None:
    """Key-value blocks, one per configuration, separated by blank lines."""
    blocks = []
    for c in configs:
        blocks.append(
            "\n".join(
                [
                    f"label = {c.label}",
                    f"intensity_pct_vt = {c.intensity_pct_vt:g}",
                    f"pressure_mmHg = {c.pressure_mmhg:g}",
                    f"cardiac_output_l_min = {c.cardiac_output_l_min:g}",
                    f"heart_rate_bpm = {c.heart_rate_bpm:g}",
                ]
            )
        )
    Path(path).write_text("\n\n".join(blocks) + "\n")


def read_configs(path) -> list[PatientConfig]:
    configs = []
    for block in Path(path).read_text().split("\n\n"):
        block = block.strip()
        if not block:
            continue
        kv = {}
        for line in block.splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        missing = [k for k in _CONFIG_KEYS if k not in kv]
        if missing:
            raise ValueError(f"config block missing keys {missing}: {block!r}")
        configs.append(
            PatientConfig(
                label=kv["label"],
                intensity_pct_vt=float(kv["intensity_pct_vt"]),
                pressure_mmhg=float(kv["pressure_mmHg"]),
                cardiac_output_l_min=float(kv["cardiac_output_l_min"]),
                heart_rate_bpm=float(kv["heart_rate_bpm"]),
            )
        )
    if not configs:
        raise ValueError(f"no configuration blocks in {path}")
    return configs


def write_targets(targets: dict[str, float], path) -> None:
    lines = ["label,mean_mca_velocity_m_s"]
    lines += [f"{label},{v:.17g}" for label, v in targets.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_targets(path) -> dict[str, float]:
    rows = Path(path).read_text().strip().splitlines()
    out = {}
    for row in rows[1:]:
        label, value = row.split(",")
        out[label] = float(value)
    return out
