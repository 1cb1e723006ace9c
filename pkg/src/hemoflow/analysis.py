"""Post-processing: waveform-vs-probe comparison, heart-rate
verification, and wall-shear-stress statistics across an ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cardiac import read_waveform
from .extraction import read_probe_csv, read_wss_series

#: analysis interval for the WSS slope-variability metric [s]
SLOPE_INTERVAL_S = 0.025


class TooFewSamples(ValueError):
    """A series is too short for the requested statistic."""


class NoDominantFrequency(ValueError):
    """The series has no spectral content above DC."""


class IncompleteEnsemble(RuntimeError):
    """Cross-instance analysis needs at least two completed instances."""

    def __init__(self, missing: list[str]):
        self.missing = list(missing)
        super().__init__(f"incomplete ensemble, missing instances: {', '.join(missing)}")


@dataclass(frozen=True)
class WssSiteStats:
    """Per-site summary over an extraction series at a fixed interval."""

    max_wss: float
    mean_wss: float
    slope_variability: float  # mean |difference| between consecutive extractions


def wss_site_stats(series, interval_s: float = SLOPE_INTERVAL_S) -> WssSiteStats:
    """Max, mean and mean absolute consecutive difference of a series.

    ``series`` holds WSS values sampled every ``interval_s`` over the
    analysis window (whole cardiac cycles).
    """
    series = np.asarray(series, dtype=float)
    if series.size < 2:
        raise TooFewSamples(f"need >= 2 samples, got {series.size}")
    if interval_s <= 0:
        raise ValueError("interval must be positive")
    return WssSiteStats(
        max_wss=float(series.max()),
        mean_wss=float(series.mean()),
        slope_variability=float(np.abs(np.diff(series)).mean()),
    )


def dominant_frequency(samples, dt: float) -> float:
    """Peak of the magnitude spectrum excluding DC [Hz]."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 8:
        raise TooFewSamples(f"need >= 8 samples for a spectrum, got {samples.size}")
    mag = np.abs(np.fft.rfft(samples - samples.mean()))
    freqs = np.fft.rfftfreq(samples.size, d=dt)
    mag[0] = 0.0
    scale = float(np.max(np.abs(samples - samples.mean()), initial=0.0))
    if scale == 0.0 or mag.max() <= 1e-12 * samples.size * scale:
        raise NoDominantFrequency("series has no content above DC")
    return float(freqs[np.argmax(mag)])


def whole_cycle_window(t: np.ndarray, period_s: float, warmup_s: float) -> np.ndarray:
    """Mask selecting whole cardiac cycles after the warm-up.

    The window starts at the first cycle boundary at or after
    ``warmup_s`` and spans the largest whole number of cycles that fit.
    """
    t = np.asarray(t, dtype=float)
    start = np.ceil(warmup_s / period_s - 1e-9) * period_s
    n_cycles = int(np.floor((t[-1] - start) / period_s + 1e-9))
    if n_cycles < 1:
        raise TooFewSamples(
            f"series of {t[-1]:.3f} s holds no whole cycle after {start:.3f} s"
        )
    end = start + n_cycles * period_s
    return (t >= start - 1e-9) & (t <= end + 1e-9)


# ---------------------------------------------------------------------------
# cross-instance report


@dataclass
class InstanceResult:
    """Pointers to one completed instance's artifacts."""

    label: str
    intensity_pct_vt: float
    heart_rate_bpm: float
    result_dir: Path
    warmup_s: float = 0.0
    steady: bool = False

    @property
    def waveform_path(self) -> Path:
        return Path(self.result_dir) / "waveform.csv"

    @property
    def probe_path(self) -> Path:
        return Path(self.result_dir) / "probe.csv"

    @property
    def wss_dir(self) -> Path:
        return Path(self.result_dir) / "wss"


@dataclass
class InstanceSummary:
    label: str
    intensity_pct_vt: float
    heart_rate_bpm: float
    input_mean_m_s: float
    input_max_m_s: float
    pulse_amplitude_m_s: float
    probe_max_m_s: float
    probe_mean_m_s: float
    dominant_freq_hz: float
    wss_max_pa: float
    wss_mean_pa: float
    wss_slope_variability_pa: float


def summarize_instance(res: InstanceResult) -> InstanceSummary:
    wave = read_waveform(res.waveform_path)
    probe = read_probe_csv(res.probe_path)
    period = 60.0 / res.heart_rate_bpm

    t_probe = np.array([r.t_s for r in probe])
    vmax_series = np.array([r.v_max_m_s for r in probe])
    vmean_series = np.array([r.v_mean_m_s for r in probe])
    if res.steady:
        # converged steady extraction: every event is in the window
        window = np.ones(t_probe.size, dtype=bool)
    else:
        window = whole_cycle_window(t_probe, period, res.warmup_s)
    dt_probe = float(t_probe[1] - t_probe[0]) if t_probe.size > 1 else 1.0
    try:
        freq = dominant_frequency(vmax_series[window], dt_probe)
    except (TooFewSamples, NoDominantFrequency):
        freq = float("nan")

    _, _, wss = read_wss_series(res.wss_dir)
    if wss.shape[1] != t_probe.size:
        raise ValueError(
            f"{res.label}: WSS events ({wss.shape[1]}) and probe records "
            f"({t_probe.size}) disagree; extraction cadences must match"
        )
    wss_window = wss[:, window]
    per_site = [wss_site_stats(row) for row in wss_window]
    return InstanceSummary(
        label=res.label,
        intensity_pct_vt=res.intensity_pct_vt,
        heart_rate_bpm=res.heart_rate_bpm,
        input_mean_m_s=float(wave.samples.mean()),
        input_max_m_s=float(wave.samples.max()),
        pulse_amplitude_m_s=float(wave.samples.max() - wave.samples.min()),
        probe_max_m_s=float(vmax_series[window].max()),
        probe_mean_m_s=float(vmean_series[window].mean()),
        dominant_freq_hz=freq,
        wss_max_pa=float(wss_window.max()),
        wss_mean_pa=float(wss_window.mean()),
        wss_slope_variability_pa=float(np.mean([s.slope_variability for s in per_site])),
    )


VELOCITY_COMPARE_CSV = "velocity_compare.csv"
WSS_STATS_CSV = "wss_stats.csv"


def cross_instance_report(
    results: list[InstanceResult],
    out_dir,
    missing: list[str] | None = None,
) -> dict[str, Path]:
    """Emit the cross-instance comparison tables and plots.

    Writes ``velocity_compare.csv``, ``wss_stats.csv`` and one SVG per
    table under ``out_dir``; rows are ordered by exercise intensity.
    Raises IncompleteEnsemble when fewer than two instances completed;
    with ``missing`` labels the report is marked partial via a leading
    comment line.
    """
    missing = list(missing or [])
    if len(results) < 2:
        raise IncompleteEnsemble(missing or ["<fewer than two instances>"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted(
        (summarize_instance(r) for r in results), key=lambda s: s.intensity_pct_vt
    )

    note = (
        [f"# partial ensemble: missing {','.join(sorted(missing))}"] if missing else []
    )

    vel_lines = note + [
        "label,intensity_pct_vt,heart_rate_bpm,input_mean_m_s,input_max_m_s,"
        "probe_max_m_s,probe_mean_m_s,dominant_freq_hz"
    ]
    for s in rows:
        vel_lines.append(
            f"{s.label},{s.intensity_pct_vt:.17g},{s.heart_rate_bpm:.17g},"
            f"{s.input_mean_m_s:.17g},{s.input_max_m_s:.17g},"
            f"{s.probe_max_m_s:.17g},{s.probe_mean_m_s:.17g},{s.dominant_freq_hz:.17g}"
        )
    vel_path = out / VELOCITY_COMPARE_CSV
    vel_path.write_text("\n".join(vel_lines) + "\n")

    wss_lines = note + [
        "label,intensity_pct_vt,input_mean_m_s,pulse_amplitude_m_s,"
        "wss_max_pa,wss_mean_pa,wss_slope_variability_pa"
    ]
    for s in rows:
        wss_lines.append(
            f"{s.label},{s.intensity_pct_vt:.17g},{s.input_mean_m_s:.17g},"
            f"{s.pulse_amplitude_m_s:.17g},{s.wss_max_pa:.17g},"
            f"{s.wss_mean_pa:.17g},{s.wss_slope_variability_pa:.17g}"
        )
    wss_path = out / WSS_STATS_CSV
    wss_path.write_text("\n".join(wss_lines) + "\n")

    plots = _emit_plots(rows, out)
    return {"velocity_compare": vel_path, "wss_stats": wss_path, **plots}


def _emit_plots(rows: list[InstanceSummary], out: Path) -> dict[str, Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = [s.intensity_pct_vt for s in rows]
    save_opts = dict(format="svg", metadata={"Date": None})

    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(x, [s.input_mean_m_s for s in rows], "o--", label="inlet mean")
    ax.plot(x, [s.input_max_m_s for s in rows], "s--", label="inlet max")
    ax.plot(x, [s.probe_max_m_s for s in rows], "^-", label="probe max")
    ax.set_xlabel("exercise intensity [% VT]")
    ax.set_ylabel("velocity [m/s]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    vel_svg = out / "velocity_compare.svg"
    fig.savefig(vel_svg, **save_opts)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.plot(x, [s.wss_max_pa for s in rows], "o-", label="max WSS")
    ax.plot(x, [s.wss_mean_pa for s in rows], "s-", label="mean WSS")
    ax.plot(
        x, [s.wss_slope_variability_pa for s in rows], "^-", label="slope variability"
    )
    ax.set_xlabel("exercise intensity [% VT]")
    ax.set_ylabel("wall shear stress [Pa]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    wss_svg = out / "wss_stats.svg"
    fig.savefig(wss_svg, **save_opts)
    plt.close(fig)

    return {"velocity_plot": vel_svg, "wss_plot": wss_svg}


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares slope, intercept and R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
