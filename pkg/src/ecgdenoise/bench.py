"""Benchmark harness: run records x methods x SNR levels, aggregate, and emit
deterministic CSV tables and SVG plots.

Every cell derives its own seed from the master seed and its coordinates, so
results are independent of execution order and of which other cells run.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import baselines, enkf, metrics, wfdbio
from .core import RPeaks, Signal, slice_signal
from .model import GaussianWaveParams, fit_params, mean_beat, observed_phase
from .svgplot import Series, render_line_chart

METHODS = ("enkf", "ekf", "sg", "wavelet", "nlms", "rls", "tvd")
NOISE_KINDS = ("bw", "ma", "em", "user")
DEFAULT_LEVELS = (-6.0, 0.0, 6.0, 12.0, 18.0, 24.0)

CSV_COLUMNS = (
    "record",
    "channel",
    "method",
    "snr_in_db",
    "snr_out_db",
    "snr_improvement_db",
    "rmse_mv",
    "prd_pct",
    "corr",
    "params_digest",
    "seed",
    "status",
)


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class BenchPlan:
    records: tuple[str, ...]
    methods: tuple[str, ...] = METHODS
    snr_levels: tuple[float, ...] = DEFAULT_LEVELS
    channel: int = 0
    noise: str = "em"  # record name under the dataset root, or a CSV path
    noise_channel: int = 0
    seed: int = 0
    duration_s: float | None = 60.0
    skip_warmup_s: float = 2.0
    n_ensemble: int = 100
    baseline_params: baselines.BaselineParams = field(default_factory=baselines.BaselineParams)

    def __post_init__(self):
        if not self.records or not self.methods or not self.snr_levels:
            raise ValueError("records, methods and snr_levels must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")


@dataclass(frozen=True)
class BenchCell:
    record_id: str
    channel: int
    method: str
    noise_kind: str
    input_snr: float
    report: metrics.MetricReport | None
    seed: int
    wall_time: float
    error: str | None = None


def cell_seed(master_seed: int, record: str, method: str, level: float) -> int:
    """Order-independent per-cell seed."""
    key = f"{master_seed}|{record}|{method}|{level:.6g}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def params_digest(plan: BenchPlan) -> str:
    """Short hash of every knob that shapes a cell, for auditable rows."""
    payload = {
        "channel": plan.channel,
        "noise": plan.noise,
        "noise_channel": plan.noise_channel,
        "duration_s": plan.duration_s,
        "skip_warmup_s": plan.skip_warmup_s,
        "n_ensemble": plan.n_ensemble,
        "baselines": plan.baseline_params.to_dict(),
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def load_record(root: Path, name: str, channel: int = 0) -> tuple[Signal, RPeaks]:
    """Read {root}/{name}.hea/.dat[/.atr] and return one channel plus its beats."""
    hea = (root / f"{name}.hea").read_text()
    header = wfdbio.read_header(hea)
    if channel >= header.n_signals:
        raise BenchError(f"record {name} has {header.n_signals} channels; asked for {channel}")
    dat = (root / header.signals[channel].filename).read_bytes()
    atr_path = root / f"{name}.atr"
    atr = atr_path.read_bytes() if atr_path.exists() else None
    record = wfdbio.assemble_record(header, dat, atr)
    return record.channels[channel], record.r_peaks


def _trim(signal: Signal, peaks: RPeaks, duration_s: float | None) -> tuple[Signal, RPeaks]:
    if duration_s is None:
        return signal, peaks
    n = min(int(round(duration_s * signal.fs)), len(signal))
    kept = peaks.indices[peaks.indices < n]
    return slice_signal(signal, 0, n), RPeaks(kept)


def fit_record_morphology(noisy: Signal, peaks: RPeaks, n_bins: int = 64) -> GaussianWaveParams:
    """Fit the Gaussian-wave morphology from the phase-binned mean beat.

    Binning across all beats averages the additive noise away, so the fit is
    performed on the contaminated signal the filters actually see.
    """
    phase = observed_phase(peaks, len(noisy))
    template = mean_beat(noisy, phase, n_bins=n_bins)
    return fit_params(template)


def run_cell(
    clean: Signal,
    peaks: RPeaks,
    noise: Signal,
    method: str,
    level: float,
    seed: int,
    plan: BenchPlan,
) -> metrics.MetricReport:
    mixdat = metrics.mix(clean, noise, level)
    noisy = mixdat.noisy
    bp = plan.baseline_params

    if method in ("enkf", "ekf"):
        params = fit_record_morphology(noisy, peaks)
        cfg = enkf.FilterConfig(n_ensemble=plan.n_ensemble, seed=seed)
        if method == "enkf":
            denoised = enkf.denoise(noisy, peaks, params, cfg)
        else:
            denoised = baselines.ekf_denoise(noisy, peaks, params, cfg)
    elif method == "sg":
        denoised = baselines.sg_filter(noisy, bp.sg.window, bp.sg.polyorder)
    elif method == "wavelet":
        denoised = baselines.wavelet_denoise(
            noisy, bp.wavelet.levels, bp.wavelet.threshold_rule, bp.wavelet.threshold
        )
    elif method == "nlms":
        denoised = baselines.nlms_denoise(noisy, mixdat.scaled_noise, bp.nlms.taps, bp.nlms.mu)
    elif method == "rls":
        denoised = baselines.rls_denoise(
            noisy, mixdat.scaled_noise, bp.rls.taps, bp.rls.forgetting, bp.rls.delta
        )
    elif method == "tvd":
        lam = bp.tvd.lam
        if lam is None:
            lam = 0.2 * baselines.noise_sigma_estimate(noisy)
        denoised = baselines.tvd_denoise(noisy, lam)
    else:
        raise BenchError(f"unknown method {method!r}")

    skip = int(round(plan.skip_warmup_s * clean.fs))
    if skip >= len(clean):
        raise BenchError("warm-up skip covers the whole evaluation segment")
    seg = lambda s: slice_signal(s, skip, len(s) - skip)
    return metrics.report(seg(clean), seg(noisy), seg(denoised))


def plan_cells(plan: BenchPlan) -> list[tuple[str, str, float]]:
    """Every (record, method, level) coordinate the plan will evaluate."""
    return [
        (record_id, method, level)
        for record_id in plan.records
        for method in plan.methods
        for level in plan.snr_levels
    ]


def run_bench(plan: BenchPlan, data_root: Path) -> list[BenchCell]:
    """Execute every (record, method, level) cell; failures become failed rows."""
    noise_sig = _load_noise(plan, data_root)
    cells: list[BenchCell] = []
    loaded: dict[str, tuple[Signal, RPeaks]] = {}
    for record_id, method, level in plan_cells(plan):
        if record_id not in loaded:
            clean, peaks = load_record(data_root, record_id, plan.channel)
            loaded[record_id] = _trim(clean, peaks, plan.duration_s)
        clean, peaks = loaded[record_id]
        seed = cell_seed(plan.seed, record_id, method, level)
        t0 = time.perf_counter()
        try:
            rep = run_cell(clean, peaks, noise_sig, method, level, seed, plan)
            err = None
        except Exception as exc:  # cell failures must not kill the run
            rep, err = None, f"{type(exc).__name__}: {exc}"
        cells.append(
            BenchCell(
                record_id=record_id,
                channel=plan.channel,
                method=method,
                noise_kind=_noise_kind(plan.noise),
                input_snr=level,
                report=rep,
                seed=seed,
                wall_time=time.perf_counter() - t0,
                error=err,
            )
        )
    return cells


def _noise_kind(noise: str) -> str:
    return noise if noise in NOISE_KINDS else "user"


def _load_noise(plan: BenchPlan, data_root: Path) -> Signal:
    if plan.noise.endswith(".csv"):
        path = Path(plan.noise)
        return wfdbio.read_csv(path.read_bytes(), fs=360.0)
    sig, _ = load_record(data_root, plan.noise, plan.noise_channel)
    return sig


def aggregate(cells: list[BenchCell]) -> list[BenchCell]:
    """Mean metric values across records for each (method, level) pair."""
    groups: dict[tuple[str, float], list[BenchCell]] = {}
    for c in cells:
        if c.report is not None:
            groups.setdefault((c.method, c.input_snr), []).append(c)
    rows = []
    for (method, level), grp in sorted(groups.items()):
        n = len(grp)
        mean = lambda f: sum(f(c.report) for c in grp) / n
        rows.append(
            BenchCell(
                record_id="mean",
                channel=grp[0].channel,
                method=method,
                noise_kind=grp[0].noise_kind,
                input_snr=level,
                report=metrics.MetricReport(
                    snr_in=mean(lambda r: r.snr_in),
                    snr_out=mean(lambda r: r.snr_out),
                    snr_improvement=mean(lambda r: r.snr_improvement),
                    rmse=mean(lambda r: r.rmse),
                    prd=mean(lambda r: r.prd),
                    corr=mean(lambda r: r.corr),
                ),
                seed=0,
                wall_time=sum(c.wall_time for c in grp),
            )
        )
    return rows


def _sort_key(cell: BenchCell):
    rec_rank = (1, "") if cell.record_id == "mean" else (0, cell.record_id)
    return (rec_rank, METHODS.index(cell.method), cell.input_snr)


def table_csv(cells: list[BenchCell], plan: BenchPlan) -> str:
    """Deterministic CSV: canonical row order, fixed float formatting, no wall times."""
    digest = params_digest(plan)
    lines = [",".join(CSV_COLUMNS)]
    for c in sorted(cells + aggregate(cells), key=_sort_key):
        if c.report is None:
            # Keep the target SNR visible so failed cells stay identifiable.
            vals = [f"{c.input_snr:.12g}", "", "", "", "", ""]
            status = f"failed: {c.error}"
        else:
            r = c.report
            vals = [
                f"{r.snr_in:.12g}",
                f"{r.snr_out:.12g}",
                f"{r.snr_improvement:.12g}",
                f"{r.rmse:.12g}",
                f"{r.prd:.12g}",
                f"{r.corr:.12g}",
            ]
            status = "ok"
        lines.append(
            ",".join(
                [c.record_id, str(c.channel), c.method, *vals, digest, str(c.seed), status]
            )
        )
    return "\n".join(lines) + "\n"


_PLOT_SPECS = (
    ("snr_improvement", "SNR improvement vs input SNR", "SNR improvement (dB)", lambda r: r.snr_improvement),
    ("corr", "Correlation vs input SNR", "correlation", lambda r: r.corr),
    ("prd", "PRD vs input SNR", "PRD (%)", lambda r: r.prd),
    ("rmse", "RMSE vs input SNR", "RMSE (mV)", lambda r: r.rmse),
)


def render_plots(cells: list[BenchCell], plan: BenchPlan) -> dict[str, str]:
    """One SVG per metric: mean-across-records value per method over the level sweep."""
    agg = {(c.method, c.input_snr): c for c in aggregate(cells)}
    levels = sorted(set(plan.snr_levels))
    out = {}
    for name, title, ylabel, pick in _PLOT_SPECS:
        series = []
        for method in plan.methods:
            pts = [(lv, agg[(method, lv)]) for lv in levels if (method, lv) in agg]
            if len(pts) >= 2:
                series.append(
                    Series(
                        label=method,
                        x=tuple(lv for lv, _ in pts),
                        y=tuple(pick(c.report) for _, c in pts),
                    )
                )
        if series:
            out[name] = render_line_chart(series, title, "input SNR (dB)", ylabel)
    return out
