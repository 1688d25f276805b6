"""Command-line front end: synth | fit | mix | denoise | bench.

Exit codes: 0 success, 1 computational failure, 2 usage or I/O error.
Dataset root comes from --data-root or the ECGDENOISE_DATA environment
variable; record arguments name WFDB records under that root, anything
ending in .csv is read as CSV.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, bench, enkf, metrics, wfdbio
from .core import RPeaks, Signal
from .model import (
    FitDivergenceError,
    GaussianWaveParams,
    default_morphology,
    detect_r_peaks,
    fit_params,
    fit_residual_rms,
    mean_beat,
    observed_phase,
    synthesize,
)

DATA_ENV = "ECGDENOISE_DATA"


class UsageError(Exception):
    """Bad arguments or unreadable files; exits with status 2."""


def _data_root(args) -> Path:
    root = args.data_root or os.environ.get(DATA_ENV)
    if not root:
        raise UsageError(f"no dataset root: pass --data-root or set {DATA_ENV}")
    path = Path(root)
    if not path.is_dir():
        raise UsageError(f"dataset root {path} is not a directory")
    return path


def _load_input(args, name: str) -> tuple[Signal, RPeaks | None]:
    """Resolve an input argument: .csv path or WFDB record name."""
    if name.endswith(".csv"):
        path = Path(name)
        if not path.is_file():
            raise UsageError(f"input file {path} does not exist")
        return wfdbio.read_csv(path.read_bytes(), fs=args.fs), None
    try:
        signal, peaks = bench.load_record(_data_root(args), name, args.channel)
    except FileNotFoundError as exc:
        raise UsageError(f"cannot read record {name!r}: {exc}") from None
    return signal, peaks if len(peaks) else None


def _write(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.write_bytes(data)


def _load_params(path: str | None) -> GaussianWaveParams:
    if path is None:
        return default_morphology()
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"params file {p} does not exist")
    return GaussianWaveParams.from_dict(json.loads(p.read_text()))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} does not exist")
        cfg = json.loads(path.read_text())
    fs = args.fs if args.fs is not None else cfg.get("fs", 360.0)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    noise_std = args.noise_std if args.noise_std is not None else cfg.get("noise_std", 0.0)
    params = (
        GaussianWaveParams.from_dict(cfg["params"]) if "params" in cfg else _load_params(args.params)
    )
    if args.rr is not None:
        rr = [args.rr] * args.beats
    elif "rr" in cfg:
        rr = cfg["rr"]
    else:
        rng = np.random.default_rng(seed)
        mean, std = cfg.get("rr_mean", 0.85), cfg.get("rr_std", 0.04)
        rr = np.clip(rng.normal(mean, std, size=args.beats), 0.3, 3.0).tolist()

    signal, phase, peaks = synthesize(params, rr, fs=fs, noise_std=noise_std, seed=seed)
    out = Path(args.out_dir)
    _write(out / "signal.csv", wfdbio.write_csv(signal))
    _write(out / "phase.csv", "phase_rad\n" + "\n".join(f"{v:.17g}" for v in phase.phases) + "\n")
    _write(out / "peaks.csv", "sample\n" + "\n".join(str(int(i)) for i in peaks.indices) + "\n")
    print(
        f"synthesized {len(signal)} samples at {fs:g} Hz: {len(peaks)} beats, "
        f"p2p {float(signal.samples.max() - signal.samples.min()):.4g} mV -> {out}/"
    )
    return 0


def cmd_fit(args) -> int:
    signal, peaks = _load_input(args, args.input)
    if args.seconds is not None:
        n = min(int(args.seconds * signal.fs), len(signal))
        signal = Signal(signal.samples[:n], signal.fs)
        if peaks is not None:
            peaks = RPeaks(peaks.indices[peaks.indices < n])
    if peaks is None or len(peaks) < 2:
        peaks = detect_r_peaks(signal)
    if len(peaks) < 10:
        print(f"error: need at least 10 beats to fit, found {len(peaks)}", file=sys.stderr)
        return 1
    phase = observed_phase(peaks, len(signal))
    template = mean_beat(signal, phase, n_bins=args.bins)
    trace: list = []
    try:
        fitted = fit_params(template, objective_trace=trace)
    except FitDivergenceError as exc:
        trace_path = Path(args.out or "fit").with_suffix(".trace.txt")
        _write(trace_path, "\n".join(f"{v:.17g}" for v in trace) + "\n")
        print(f"error: {exc}; objective trace written to {trace_path}", file=sys.stderr)
        return 1
    doc = json.dumps(fitted.to_dict(), indent=2)
    if args.out:
        _write(Path(args.out), doc + "\n")
    else:
        print(doc)
    rms = fit_residual_rms(template, fitted)
    r_amp = float(np.max(np.abs(template.mean)))
    print(
        f"fit over {len(peaks)} beats, {args.bins} bins: residual rms {rms:.5g} mV "
        f"({100 * rms / r_amp:.1f}% of peak template amplitude)"
    )
    return 0


def cmd_mix(args) -> int:
    clean, _ = _load_input(args, args.clean)
    noise, _ = _load_input(args, args.noise)
    mixed = metrics.mix(clean, noise, args.level)
    out = Path(args.out_dir)
    _write(out / "noisy.csv", wfdbio.write_csv(mixed.noisy))
    _write(out / "reference.csv", wfdbio.write_csv(mixed.scaled_noise))
    if args.check:
        measured = metrics.snr(mixed.clean, mixed.noisy)
        print(f"measured SNR {measured:.6f} dB (target {args.level:g} dB), gain {mixed.gain:.6g}")
    else:
        print(f"mixed at {args.level:g} dB -> {out}/noisy.csv, {out}/reference.csv")
    return 0


def cmd_denoise(args) -> int:
    signal, peaks = _load_input(args, args.input)
    method = args.method
    if method in ("nlms", "rls") and not args.reference:
        raise UsageError(f"--method {method} requires --reference (the noise channel)")

    if method in ("enkf", "ekf"):
        if peaks is None:
            peaks = detect_r_peaks(signal)
        if args.params:
            params = _load_params(args.params)
        else:
            phase = observed_phase(peaks, len(signal))
            params = fit_params(mean_beat(signal, phase, n_bins=64))
        cfg = enkf.FilterConfig(n_ensemble=args.n_ensemble, seed=args.seed)
        if method == "enkf":
            denoised = enkf.denoise(signal, peaks, params, cfg)
        else:
            denoised = baselines.ekf_denoise(signal, peaks, params, cfg)
    elif method == "sg":
        denoised = baselines.sg_filter(signal, args.window, args.polyorder)
    elif method == "wavelet":
        denoised = baselines.wavelet_denoise(signal, args.levels)
    elif method == "nlms":
        ref = wfdbio.read_csv(Path(args.reference).read_bytes(), fs=signal.fs)
        denoised = baselines.nlms_denoise(signal, ref, args.taps, args.mu)
    elif method == "rls":
        ref = wfdbio.read_csv(Path(args.reference).read_bytes(), fs=signal.fs)
        denoised = baselines.rls_denoise(signal, ref, args.taps, args.forgetting, args.delta)
    elif method == "tvd":
        lam = args.lam if args.lam is not None else 0.2 * baselines.noise_sigma_estimate(signal)
        denoised = baselines.tvd_denoise(signal, lam)
    else:
        raise UsageError(f"unknown method {method!r}")

    _write(Path(args.out), wfdbio.write_csv(denoised))
    if args.clean:
        clean, _ = _load_input(args, args.clean)
        rep = metrics.report(clean, signal, denoised)
        print(
            f"snr_in {rep.snr_in:.4f} dB, snr_out {rep.snr_out:.4f} dB, "
            f"improvement {rep.snr_improvement:.4f} dB, rmse {rep.rmse:.6g} mV, "
            f"prd {rep.prd:.4f}%, corr {rep.corr:.6f}"
        )
    else:
        print(f"denoised {len(signal)} samples with {method} -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    plan = bench.BenchPlan(
        records=tuple(args.records.split(",")),
        methods=tuple(args.methods.split(",")) if args.methods else bench.METHODS,
        snr_levels=tuple(float(v) for v in args.levels.split(",")) if args.levels else bench.DEFAULT_LEVELS,
        channel=args.channel,
        noise=args.noise,
        seed=args.seed,
        duration_s=args.duration,
        n_ensemble=args.n_ensemble,
    )
    cells = bench.run_bench(plan, _data_root(args))
    out = Path(args.out_dir)
    _write(out / "bench.csv", bench.table_csv(cells, plan))
    for name, svg in bench.render_plots(cells, plan).items():
        _write(out / f"{name}.svg", svg)
    failed = [c for c in cells if c.report is None]
    total = sum(c.wall_time for c in cells)
    print(
        f"{len(cells)} cells ({len(failed)} failed) in {total:.1f} s -> {out}/bench.csv",
        file=sys.stderr,
    )
    for c in failed:
        print(f"  failed: {c.record_id}/{c.method}@{c.input_snr:g}dB: {c.error}", file=sys.stderr)
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecgdenoise",
        description="ECG denoising with an ensemble Kalman filter, classical baselines, "
        "and a calibrated noise-stress benchmark.",
    )
    parser.add_argument("--data-root", help=f"dataset directory (default: ${DATA_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ECG from the beat model")
    p.add_argument("--config", help="JSON config with params/rr/fs/noise_std/seed")
    p.add_argument("--params", help="morphology JSON (default: built-in)")
    p.add_argument("--out-dir", default="synth_out")
    p.add_argument("--beats", type=int, default=30)
    p.add_argument("--rr", type=float, help="constant R-R interval in seconds")
    p.add_argument("--fs", type=float, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit the Gaussian-wave morphology of a record")
    p.add_argument("input", help="record name or .csv path")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--fs", type=float, default=360.0, help="sampling rate for CSV input")
    p.add_argument("--seconds", type=float, help="use only the first S seconds")
    p.add_argument("--bins", type=int, default=64)
    p.add_argument("--out", help="write params JSON here instead of stdout")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mix", help="contaminate a clean record at a calibrated SNR")
    p.add_argument("clean", help="record name or .csv path")
    p.add_argument("noise", help="noise record name or .csv path")
    p.add_argument("--level", type=float, required=True, help="target SNR in dB")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--fs", type=float, default=360.0)
    p.add_argument("--out-dir", default="mix_out")
    p.add_argument("--check", action="store_true", help="print the measured SNR of the mix")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("denoise", help="denoise one input with one method")
    p.add_argument("input", help="record name or .csv path")
    p.add_argument("--method", required=True, choices=bench.METHODS)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--fs", type=float, default=360.0)
    p.add_argument("--out", default="denoised.csv")
    p.add_argument("--clean", help="clean reference (record or csv); prints metrics")
    p.add_argument("--reference", help="noise reference csv for nlms/rls")
    p.add_argument("--params", help="morphology JSON for enkf/ekf")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-ensemble", type=int, default=100)
    p.add_argument("--window", type=int, default=15)
    p.add_argument("--polyorder", type=int, default=3)
    p.add_argument("--levels", type=int, default=4, help="wavelet decomposition levels")
    p.add_argument("--taps", type=int, default=16)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--forgetting", type=float, default=0.999)
    p.add_argument("--delta", type=float, default=100.0)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="TV regularization")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("bench", help="run the records x methods x levels benchmark")
    p.add_argument("--records", required=True, help="comma-separated record names")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(bench.METHODS)}")
    p.add_argument("--levels", help="comma-separated SNR levels in dB")
    p.add_argument("--noise", default="em", help="noise record name or .csv path")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=60.0, help="seconds per record")
    p.add_argument("--n-ensemble", type=int, default=100)
    p.add_argument("--out-dir", default="bench_out")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        wfdbio.HeaderParseError,
        wfdbio.CsvParseError,
        wfdbio.AnnotationParseError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
