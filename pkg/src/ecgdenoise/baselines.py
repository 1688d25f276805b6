"""Comparison filters: model-based EKF, Savitzky-Golay, wavelet soft
thresholding, NLMS, RLS and exact 1-D total-variation denoising.

Parameter choices are explicit everywhere; nothing is tuned silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RPeaks, Signal, require_valid, wrap_centered, wrap_phase
from .enkf import FilterConfig, beat_angular_velocities, resolve_config
from .model import GaussianWaveParams, observed_phase, wave_increment, wave_increment_dtheta


class ConditioningError(RuntimeError):
    """EKF covariance lost positive definiteness and could not be repaired."""


@dataclass(frozen=True)
class SgParams:
    window: int = 15
    polyorder: int = 3


@dataclass(frozen=True)
class WaveletParams:
    levels: int = 4
    threshold_rule: str = "universal"  # or "fixed"
    threshold: float | None = None  # used when rule == "fixed"


@dataclass(frozen=True)
class NlmsParams:
    taps: int = 16
    mu: float = 0.5


@dataclass(frozen=True)
class RlsParams:
    taps: int = 16
    forgetting: float = 0.999
    delta: float = 100.0


@dataclass(frozen=True)
class TvdParams:
    lam: float | None = None  # None: 0.2 * noise-std estimate from the finest wavelet details


@dataclass(frozen=True)
class BaselineParams:
    """Bundle of per-method settings for the bench harness."""

    sg: SgParams = SgParams()
    wavelet: WaveletParams = WaveletParams()
    nlms: NlmsParams = NlmsParams()
    rls: RlsParams = RlsParams()
    tvd: TvdParams = TvdParams()

    def to_dict(self) -> dict:
        return {
            "sg": {"window": self.sg.window, "polyorder": self.sg.polyorder},
            "wavelet": {
                "levels": self.wavelet.levels,
                "threshold_rule": self.wavelet.threshold_rule,
                "threshold": self.wavelet.threshold,
            },
            "nlms": {"taps": self.nlms.taps, "mu": self.nlms.mu},
            "rls": {"taps": self.rls.taps, "forgetting": self.rls.forgetting, "delta": self.rls.delta},
            "tvd": {"lam": self.tvd.lam},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineParams":
        return cls(
            sg=SgParams(**d.get("sg", {})),
            wavelet=WaveletParams(**d.get("wavelet", {})),
            nlms=NlmsParams(**d.get("nlms", {})),
            rls=RlsParams(**d.get("rls", {})),
            tvd=TvdParams(**d.get("tvd", {})),
        )


# ---------------------------------------------------------------------------
# Extended Kalman filter on the beat model
# ---------------------------------------------------------------------------


def ekf_jacobian(theta: float, params: GaussianWaveParams, phase_step: float) -> np.ndarray:
    """State Jacobian of the transition at the pre-update phase."""
    return np.array(
        [
            [1.0, 0.0],
            [float(wave_increment_dtheta(theta, params, phase_step)), 1.0],
        ]
    )


def ekf_denoise(
    signal: Signal,
    r_peaks: RPeaks,
    params: GaussianWaveParams,
    cfg: FilterConfig = FilterConfig(),
) -> Signal:
    """Standard EKF recursion over the beat model with identity observation map.

    Uses the same wrap rules and noise-default resolution as the ensemble
    filter, so the two are directly comparable.
    """
    require_valid(signal)
    r_peaks.check_against(len(signal), signal.fs)
    n = len(signal)
    fs = signal.fs
    phase = observed_phase(r_peaks, n)
    omega = beat_angular_velocities(r_peaks, n, fs)
    cfg = resolve_config(cfg, signal, phase, params, omega)

    # Phase noise enters before the nonlinearity (the increment is evaluated
    # at the perturbed phase), amplitude noise after, matching the ensemble
    # filter's transition semantics, including the activity-scaled eta std.
    q_theta = np.diag([cfg.q_theta**2, 0.0])
    r = np.diag([cfg.r_phi**2, cfg.r_s**2])
    x = np.array([phase.phases[0], signal.samples[0]])
    p = np.diag([max(cfg.r_phi**2, 1e-12), max(cfg.r_s**2, 1e-12)])

    out = np.empty(n)
    out[0] = x[1]
    eye = np.eye(2)
    for k in range(1, n):
        step = omega[k] / fs
        f = ekf_jacobian(float(x[0]), params, step)
        dz = float(wave_increment(x[0], params, step))
        x = np.array([wrap_phase(x[0] + step), x[1] + dz])
        eta_std = cfg.q_z + cfg.q_z_activity * abs(dz) if cfg.q_z > 0 else 0.0
        p = f @ (p + q_theta) @ f.T + np.diag([0.0, eta_std**2])
        s = p + r
        det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
        if not np.isfinite(det) or det <= 0:
            raise ConditioningError(f"innovation covariance not positive definite at sample {k}")
        kgain = p @ (np.array([[s[1, 1], -s[0, 1]], [-s[1, 0], s[0, 0]]]) / det)
        innov = np.array(
            [
                float(wrap_centered(phase.phases[k] - x[0])),
                signal.samples[k] - x[1],
            ]
        )
        x = x + kgain @ innov
        x[0] = wrap_phase(x[0])
        p = (eye - kgain) @ p
        p = 0.5 * (p + p.T)
        if p[0, 0] < 0 or p[1, 1] < 0:
            # One repair attempt: pull the covariance back to the PSD cone.
            p = 0.5 * (p + p.T) + 1e-12 * np.trace(np.abs(p)) * eye
            if p[0, 0] < 0 or p[1, 1] < 0:
                raise ConditioningError(f"covariance lost positive definiteness at sample {k}")
        out[k] = x[1]
    return Signal(out, fs)


# ---------------------------------------------------------------------------
# Savitzky-Golay
# ---------------------------------------------------------------------------


def sg_filter(signal: Signal, window: int = 15, polyorder: int = 3) -> Signal:
    """Least-squares polynomial smoothing.

    Interior samples use the symmetric convolution kernel; samples within
    half a window of either edge are fit on the truncated asymmetric window
    (no zero padding), which preserves polynomial reproduction at the edges.
    """
    require_valid(signal)
    n = len(signal)
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be odd and positive")
    if polyorder >= window:
        raise ValueError("polyorder must be less than window")
    if window > n:
        raise ValueError("window exceeds signal length")
    x = signal.samples
    if window == 1:
        return Signal(x.copy(), signal.fs)

    half = window // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    vand = np.vander(offsets, polyorder + 1, increasing=True)
    # Row of the projection matrix that evaluates the fit at offset 0.
    kernel = np.linalg.lstsq(vand.T @ vand, vand.T, rcond=None)[0][0]
    out = np.convolve(x, kernel[::-1], mode="same")

    for k in range(min(half, n)):
        seg = x[: k + half + 1]
        out[k] = _sg_edge_value(seg, np.arange(len(seg)) - k, polyorder)
    for k in range(max(n - half, 0), n):
        seg = x[k - half :]
        out[k] = _sg_edge_value(seg, np.arange(k - half, n) - k, polyorder)
    return Signal(out, signal.fs)


def _sg_edge_value(seg: np.ndarray, offsets: np.ndarray, polyorder: int) -> float:
    vand = np.vander(offsets.astype(np.float64), polyorder + 1, increasing=True)
    coef = np.linalg.lstsq(vand, seg, rcond=None)[0]
    return float(coef[0])


# ---------------------------------------------------------------------------
# Wavelet soft thresholding
# ---------------------------------------------------------------------------


def _daubechies_filter(n_moments: int = 4) -> np.ndarray:
    """Minimum-phase orthonormal Daubechies scaling filter with 2*n_moments taps.

    Built by spectral factorization of the maxflat half-band polynomial, so
    the coefficients carry full double precision rather than copied digits.
    """
    nm = n_moments
    k = np.arange(nm)
    from math import comb

    pc = np.array([comb(nm - 1 + j, j) for j in k], dtype=np.float64)
    # Roots of P(y), then map y -> z via y = (2 - z - 1/z)/4 and keep the
    # root of each pair inside the unit circle.
    yroots = np.roots(pc[::-1])
    zroots = []
    for y in yroots:
        c = np.array([1.0, -(2.0 - 4.0 * y), 1.0])
        r1, r2 = np.roots(c)
        zroots.append(r1 if abs(r1) < 1.0 else r2)
    poly = np.array([1.0], dtype=complex)
    for _ in range(nm):
        poly = np.convolve(poly, [1.0, 1.0])  # (1 + z)^nm
    for z in zroots:
        poly = np.convolve(poly, [1.0, -z])
    h = np.real(poly)
    return h * (np.sqrt(2.0) / h.sum())


_DB_H = _daubechies_filter(4)
_DB_G = np.array([(-1.0) ** v * _DB_H[len(_DB_H) - 1 - v] for v in range(len(_DB_H))])


def _dwt_step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ln = len(_DB_H)
    ext = np.pad(x, (ln - 1, ln - 1), mode="symmetric")
    a = np.convolve(ext, _DB_H[::-1], mode="valid")[1::2]
    d = np.convolve(ext, _DB_G[::-1], mode="valid")[1::2]
    return a, d


def _idwt_step(a: np.ndarray, d: np.ndarray, out_len: int) -> np.ndarray:
    ln = len(_DB_H)
    ua = np.zeros(2 * len(a))
    ua[::2] = a
    ud = np.zeros(2 * len(d))
    ud[::2] = d
    rec = np.convolve(ua, _DB_H) + np.convolve(ud, _DB_G)
    return rec[ln - 2 : ln - 2 + out_len]


def wavedec(x: np.ndarray, levels: int) -> tuple[np.ndarray, list[np.ndarray], list[int]]:
    """Multi-level DWT; returns (approximation, details fine->coarse, input lengths)."""
    details = []
    lengths = []
    a = x
    for _ in range(levels):
        lengths.append(len(a))
        a, d = _dwt_step(a)
        details.append(d)
    return a, details, lengths


def waverec(a: np.ndarray, details: list[np.ndarray], lengths: list[int]) -> np.ndarray:
    for d, ln in zip(reversed(details), reversed(lengths)):
        a = _idwt_step(a, d, ln)
    return a


def wavelet_denoise(
    signal: Signal,
    levels: int = 4,
    threshold_rule: str = "universal",
    threshold: float | None = None,
) -> Signal:
    """Daubechies-4 decomposition, soft-threshold the details, reconstruct.

    The universal rule uses sigma*sqrt(2 ln n) with sigma estimated as
    median(|finest details|)/0.6745.
    """
    require_valid(signal)
    n = len(signal)
    if levels < 1:
        raise ValueError("levels must be at least 1")
    if n < 2**levels:
        raise ValueError(f"signal of length {n} too short for {levels} levels")
    a, details, lengths = wavedec(signal.samples, levels)
    if threshold_rule == "universal":
        t = noise_sigma_estimate(signal) * np.sqrt(2.0 * np.log(n))
    elif threshold_rule == "fixed":
        if threshold is None:
            raise ValueError("fixed threshold rule requires a threshold value")
        t = float(threshold)
    else:
        raise ValueError(f"unknown threshold rule: {threshold_rule!r}")
    shrunk = [np.sign(d) * np.maximum(np.abs(d) - t, 0.0) for d in details]
    return Signal(waverec(a, shrunk, lengths), signal.fs)


def noise_sigma_estimate(signal: Signal) -> float:
    """Robust noise-std estimate from the finest-scale detail coefficients."""
    _, d1 = _dwt_step(signal.samples)
    return float(np.median(np.abs(d1)) / 0.6745)


# ---------------------------------------------------------------------------
# Adaptive noise cancellation
# ---------------------------------------------------------------------------


def nlms_denoise(primary: Signal, reference: Signal, taps: int = 16, mu: float = 0.5) -> Signal:
    """Normalized LMS canceller: subtract the adaptively filtered reference.

    The output is the residual e_k = primary_k - w . ref_window_k, which is
    the denoised signal when the reference correlates with the contamination
    and not with the ECG.
    """
    require_valid(primary)
    if len(reference) != len(primary):
        raise ValueError("reference must match the primary signal length")
    if taps < 1:
        raise ValueError("taps must be at least 1")
    if not 0.0 < mu < 2.0:
        raise ValueError("mu must lie in (0, 2)")
    eps = 1e-8
    x = primary.samples
    ref = reference.samples
    n = len(x)
    w = np.zeros(taps)
    out = np.empty(n)
    padded = np.concatenate([np.zeros(taps - 1), ref])
    for k in range(n):
        win = padded[k : k + taps][::-1]
        e = x[k] - w @ win
        out[k] = e
        w = w + (mu / (eps + win @ win)) * e * win
    return Signal(out, primary.fs)


def rls_denoise(
    primary: Signal,
    reference: Signal,
    taps: int = 16,
    forgetting: float = 0.999,
    delta: float = 100.0,
) -> Signal:
    """Recursive least squares canceller with the same topology as NLMS."""
    require_valid(primary)
    if len(reference) != len(primary):
        raise ValueError("reference must match the primary signal length")
    if taps < 1:
        raise ValueError("taps must be at least 1")
    if not 0.0 < forgetting <= 1.0:
        raise ValueError("forgetting factor must lie in (0, 1]")
    if delta <= 0:
        raise ValueError("delta must be positive")
    x = primary.samples
    ref = reference.samples
    n = len(x)
    w = np.zeros(taps)
    p = delta * np.eye(taps)
    out = np.empty(n)
    padded = np.concatenate([np.zeros(taps - 1), ref])
    lam = forgetting
    for k in range(n):
        win = padded[k : k + taps][::-1]
        pw = p @ win
        gain = pw / (lam + win @ pw)
        e = x[k] - w @ win
        out[k] = e
        w = w + gain * e
        p = (p - np.outer(gain, win @ p)) / lam
    return Signal(out, primary.fs)


# ---------------------------------------------------------------------------
# Total variation denoising (exact, taut string)
# ---------------------------------------------------------------------------


def tvd_denoise(signal: Signal, lam: float) -> Signal:
    """Exact minimizer of 0.5*||y - x||^2 + lam * sum |x[k+1] - x[k]|.

    Computed directly as the derivative of the taut string through the
    half-width-lam tube around the running sum of y, pinned at both ends.
    Non-iterative; optimality is checkable through the KKT conditions on the
    running antiderivative of (y - x).
    """
    require_valid(signal)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    y = signal.samples
    if lam == 0.0 or len(y) == 1:
        return Signal(y.copy(), signal.fs)
    return Signal(_taut_string(y, lam), signal.fs)


def _taut_string(y: np.ndarray, lam: float) -> np.ndarray:
    n = y.shape[0]
    r = np.concatenate([[0.0], np.cumsum(y)])
    upper = r + lam
    lower = r - lam
    upper[0] = lower[0] = 0.0
    upper[n] = lower[n] = r[n]

    x = np.empty(n)
    anchor = 0
    s_anchor = 0.0
    # Hulls over the open window (anchor, k]; element 0 is the anchor point.
    up_i = [0]
    up_v = [0.0]
    lo_i = [0]
    lo_v = [0.0]

    def slope(i0, v0, i1, v1):
        return (v1 - v0) / (i1 - i0)

    def push(idx_list, val_list, i, v, convex):
        while len(idx_list) >= 2:
            s_last = slope(idx_list[-2], val_list[-2], idx_list[-1], val_list[-1])
            s_new = slope(idx_list[-1], val_list[-1], i, v)
            if (convex and s_last >= s_new) or (not convex and s_last <= s_new):
                idx_list.pop()
                val_list.pop()
            else:
                break
        idx_list.append(i)
        val_list.append(v)

    for k in range(1, n + 1):
        push(up_i, up_v, k, upper[k], convex=True)
        push(lo_i, lo_v, k, lower[k], convex=False)
        while len(up_i) >= 2 and len(lo_i) >= 2:
            su = slope(up_i[0], up_v[0], up_i[1], up_v[1])
            sl = slope(lo_i[0], lo_v[0], lo_i[1], lo_v[1])
            if sl <= su:
                break
            # The string bends at the earlier first vertex; emit that stretch.
            if up_i[1] <= lo_i[1]:
                j, v, s = up_i[1], up_v[1], su
                bent_upper = True
            else:
                j, v, s = lo_i[1], lo_v[1], sl
                bent_upper = False
            x[anchor:j] = s
            anchor, s_anchor = j, v
            if bent_upper:
                up_i, up_v = up_i[1:], up_v[1:]
                lo_i, lo_v = [anchor], [s_anchor]
                for i in range(anchor + 1, k + 1):
                    push(lo_i, lo_v, i, lower[i], convex=False)
            else:
                lo_i, lo_v = lo_i[1:], lo_v[1:]
                up_i, up_v = [anchor], [s_anchor]
                for i in range(anchor + 1, k + 1):
                    push(up_i, up_v, i, upper[i], convex=True)

    if anchor < n:
        x[anchor:n] = (r[n] - s_anchor) / (n - anchor)
    return x
