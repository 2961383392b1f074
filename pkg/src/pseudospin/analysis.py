"""Post-processing of simulated traces: spectra, extrema, delays, phases, fits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from . import io
from ._numeric import local_maxima, parabolic_vertex

DEFAULT_ZERO_PAD = 8


class AnalysisError(RuntimeError):
    pass


class FitError(AnalysisError):
    def __init__(self, message: str, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


def _grid_step(t: np.ndarray) -> float:
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise AnalysisError("need at least two samples")
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise AnalysisError("time grid is not uniform")
    return float(dt)


# ---------------------------------------------------------------- spectra

@dataclass
class FftSpectrum:
    """Two-sided spectrum; ``freq_hz`` are offsets from the rotating frame."""

    freq_hz: np.ndarray
    coefficients: np.ndarray
    window: str
    zero_pad: int
    n_samples: int
    dt: float
    t0: float = 0.0

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.coefficients)

    @property
    def bin_hz(self) -> float:
        return float(self.freq_hz[1] - self.freq_hz[0])

    def energy(self) -> float:
        """Spectral energy normalized so it equals sum |x|^2 of the windowed samples."""
        return float(np.sum(self.magnitude ** 2) / self.coefficients.size)

    def inverse(self) -> np.ndarray:
        """Windowed samples recovered from the (zero-padded) spectrum."""
        return np.fft.ifft(np.fft.ifftshift(self.coefficients))[:self.n_samples]

    def csv_bytes(self) -> bytes:
        return io.csv_bytes(["freq_hz", "magnitude"], [self.freq_hz, self.magnitude])

    def to_dict(self) -> dict:
        return {"window": self.window, "zero_pad": self.zero_pad,
                "n_samples": self.n_samples, "dt_s": self.dt, "t0_s": self.t0,
                "bin_hz": self.bin_hz}

    def write(self, path) -> dict:
        path = Path(path)
        h = io.write_bytes(path, self.csv_bytes())
        hj = io.write_json(path.with_suffix(".json"), {**self.to_dict(), "content_sha256": h})
        return {path.name: h, path.with_suffix(".json").name: hj}


def spectrum_of(t, x, window: str = "rectangular",
                zero_pad: int = DEFAULT_ZERO_PAD) -> FftSpectrum:
    """FFT of complex samples on a uniform grid."""
    dt = _grid_step(t)
    x = np.asarray(x, dtype=complex)
    if window == "rectangular":
        w = np.ones(x.size)
    elif window == "hann":
        w = np.hanning(x.size)
    else:
        raise ValueError(f"unknown window {window!r}")
    if zero_pad < 1:
        raise ValueError("zero_pad must be >= 1")
    m = x.size * zero_pad
    coeffs = np.fft.fftshift(np.fft.fft(x * w, m))
    freq = np.fft.fftshift(np.fft.fftfreq(m, dt))
    return FftSpectrum(freq, coeffs, window, zero_pad, x.size, dt, float(t[0]))


def fid_fft(trace, window: str = "rectangular", skip_dead_time: bool = True,
            zero_pad: int = DEFAULT_ZERO_PAD) -> FftSpectrum:
    """Spectrum of the cavity field a(t) of a :class:`SimulationTrace`.

    With ``skip_dead_time`` only samples the receiver would see are used.
    """
    mask = trace.analysis_mask if skip_dead_time else np.ones(trace.t.size, dtype=bool)
    if mask.sum() < 2:
        raise AnalysisError("no samples after the dead time")
    return spectrum_of(trace.t[mask], trace.a[mask], window, zero_pad)


def spectral_peaks(spectrum: FftSpectrum, min_prominence: float = 0.05):
    """(frequency, height, prominence) of peaks, most prominent first.

    ``min_prominence`` is relative to the largest magnitude.
    """
    mag = spectrum.magnitude
    top = mag.max()
    if top == 0:
        return []
    idx, props = find_peaks(mag, prominence=min_prominence * top)
    order = np.argsort(props["prominences"])[::-1]
    out = []
    for k in order:
        i = int(idx[k])
        p, h = parabolic_vertex(mag, i)
        out.append((float(spectrum.freq_hz[i] + p * spectrum.bin_hz), float(h),
                    float(props["prominences"][k])))
    return out


def peak_separation(spectrum: FftSpectrum, min_prominence: float = 0.05) -> float:
    """Distance in Hz between the two most prominent spectral peaks."""
    peaks = spectral_peaks(spectrum, min_prominence)
    if len(peaks) < 2:
        raise AnalysisError("fewer than two peaks in spectrum")
    return abs(peaks[0][0] - peaks[1][0])


# ---------------------------------------------------------------- extrema

@dataclass(frozen=True)
class Extremum:
    t: float
    value: float
    kind: str  # "max" or "min"


def extract_extrema(t, series, min_prominence: float = 0.0,
                    include_start: bool = True) -> list:
    """Alternating maxima and minima of a real series.

    ``min_prominence`` is a fraction of max |series|. Interior extrema are
    located to sub-sample precision with a parabola. When ``include_start``
    is set the first sample counts as an extremum of the kind the series
    leaves it with.
    """
    y = np.asarray(series, dtype=float)
    t = np.asarray(t, dtype=float)
    if y.size < 5:
        raise ValueError("series needs at least 5 samples")
    dt = _grid_step(t)
    scale = np.max(np.abs(y))
    prom = min_prominence * scale if scale > 0 else 0.0
    found = []
    for kind, sign in (("max", 1.0), ("min", -1.0)):
        idx, _ = find_peaks(sign * y, prominence=prom if prom > 0 else None)
        for i in idx:
            p, v = parabolic_vertex(y, int(i))
            found.append(Extremum(float(t[i] + p * dt), float(v), kind))
    found.sort(key=lambda e: e.t)
    if include_start and y[1] != y[0]:
        found.insert(0, Extremum(float(t[0]), float(y[0]), "max" if y[1] < y[0] else "min"))
    merged = []
    for e in found:
        if merged and merged[-1].kind == e.kind:
            better = (e.value > merged[-1].value) if e.kind == "max" else (e.value < merged[-1].value)
            if better:
                merged[-1] = e
            continue
        merged.append(e)
    return merged


def count_revivals(trace, floor: float = 1e-3) -> int:
    """Minima of |a| after the pulse, up to the point where |a| stays below
    ``floor`` times its post-pulse peak."""
    sel = trace.t > trace.drive_end
    amp = np.abs(trace.a[sel])
    peak = amp.max()
    above = np.nonzero(amp >= floor * peak)[0]
    if above.size == 0:
        return 0
    amp = amp[:above[-1] + 1]
    mins = [i for i in range(1, amp.size - 1) if amp[i - 1] > amp[i] <= amp[i + 1]]
    return len(mins)


# ---------------------------------------------------------------- delay

def _emission_maxima(trace) -> np.ndarray:
    """Refined times of |a| maxima after the pulse."""
    amp = np.abs(trace.a)
    start = int(np.searchsorted(trace.t, trace.drive_end, side="right"))
    idx = local_maxima(amp[start:]) + start
    idx = idx[idx < amp.size - 1]
    return np.array([trace.t[i] + parabolic_vertex(amp, int(i))[0] * trace.dt for i in idx])


def delay_time(trace, baseline, gated: bool = False) -> float:
    """Emission delay of ``trace`` relative to ``baseline`` (seconds).

    By default the first |a| maximum after the pulse is compared in both
    traces. With ``gated`` the first maximum after the dead time is taken
    from ``trace``; if it is the k-th maximum after the pulse, the k-th
    maximum of the baseline is subtracted. Since the exchange period depends
    on the rotation angle, the gated value jumps whenever a maximum crosses
    the gate.
    """
    tm = _emission_maxima(trace)
    bm = _emission_maxima(baseline)
    if tm.size == 0 or bm.size == 0:
        raise AnalysisError("no emission maximum after the pulse")
    k = 0
    if gated:
        after = np.nonzero(tm >= trace.drive_end + trace.dead_time)[0]
        if after.size == 0:
            raise AnalysisError("no emission maximum after the dead time")
        k = int(after[0])
        if k >= bm.size:
            raise AnalysisError(f"baseline has fewer than {k + 1} emission maxima")
    return float(tm[k] - bm[k])


# ---------------------------------------------------------------- fitting

@dataclass
class FitResult:
    names: tuple
    values: np.ndarray
    stderr: np.ndarray
    rss: float
    r_squared: float
    converged: bool
    n_iter: int
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def to_dict(self) -> dict:
        return {"parameters": {n: float(v) for n, v in zip(self.names, self.values)},
                "stderr": {n: float(s) for n, s in zip(self.names, self.stderr)},
                "rss": self.rss, "r_squared": self.r_squared, "converged": self.converged,
                "n_iter": self.n_iter, **self.extra}

    def write(self, path) -> str:
        return io.write_json(Path(path), self.to_dict())


def _numeric_jacobian(fun, p, f0):
    jac = np.empty((f0.size, p.size))
    for j in range(p.size):
        h = 1e-7 * max(abs(p[j]), 1e-12)
        q = p.copy()
        q[j] += h
        jac[:, j] = (fun(q) - f0) / h
    return jac


def levenberg_marquardt(residual: Callable, p0, max_iter: int = 200, xtol: float = 1e-10,
                        lam0: float = 1e-3):
    """Damped Gauss-Newton on ``residual(p)`` with a forward-difference Jacobian.

    Returns (p, residual vector, jacobian, n_iter). Raises :class:`FitError`
    if the relative step never falls below ``xtol`` within ``max_iter``.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    cost = float(r @ r)
    lam = lam0
    for it in range(1, max_iter + 1):
        jac = _numeric_jacobian(residual, p, r)
        jtj = jac.T @ jac
        g = jac.T @ r
        while True:
            a = jtj + lam * np.diag(np.diag(jtj) + 1e-300)
            try:
                step = -np.linalg.solve(a, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(a, g, rcond=None)[0]
            trial = p + step
            r_new = residual(trial)
            cost_new = float(r_new @ r_new)
            if np.all(np.isfinite(r_new)) and cost_new <= cost:
                lam = max(lam / 10.0, 1e-15)
                break
            lam *= 10.0
            if lam > 1e16:
                step = np.zeros_like(p)
                trial, r_new, cost_new = p, r, cost
                break
        # relative step over the whole parameter vector, as in MINPACK
        rel = np.linalg.norm(step) / (np.linalg.norm(trial) + xtol)
        p, r, cost = trial, r_new, cost_new
        if rel < xtol:
            return p, r, _numeric_jacobian(residual, p, r), it
    raise FitError(f"no convergence in {max_iter} iterations", p)


def _finish_fit(names, p, r, jac, y, n_iter, extra=None) -> FitResult:
    rss = float(r @ r)
    tss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    dof = max(y.size - p.size, 1)
    try:
        cov = np.linalg.inv(jac.T @ jac) * rss / dof
        stderr = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        stderr = np.full(p.size, np.nan)
    return FitResult(tuple(names), p, stderr, rss, r2, True, n_iter, extra or {})


def delay_model(theta, gamma_rate: float, t0: float):
    """(2/Gamma) log(2 / (1 + cos theta)) + t0."""
    theta = np.asarray(theta, dtype=float)
    return 2.0 / gamma_rate * np.log(2.0 / (1.0 + np.cos(theta))) + t0


def fit_delay_model(theta, t_d) -> FitResult:
    """Fit the superradiant delay law; Gamma in s^-1, t0 in seconds."""
    theta = np.asarray(theta, dtype=float)
    t_d = np.asarray(t_d, dtype=float)
    if theta.size < 4:
        raise ValueError("need at least 4 points")
    if np.any(theta <= math.pi / 2) or np.any(theta >= math.pi):
        raise ValueError("angles must lie in (pi/2, pi)")
    x = np.log(2.0 / (1.0 + np.cos(theta)))
    # linear start: t = c x + t0 with c = 2/Gamma
    c, t0 = np.polyfit(x, t_d, 1)
    if c <= 0:
        raise FitError("delay does not grow toward inversion", np.array([np.nan, t0]))
    scale = np.array([2.0 / c, max(abs(t0), 1e-9)])

    def residual(q):
        return (delay_model(theta, q[0] * scale[0], q[1] * scale[1]) - t_d) / np.std(t_d)

    q, r, jac, n = levenberg_marquardt(residual, np.array([1.0, t0 / scale[1]]))
    r = r * np.std(t_d)
    jac = jac * np.std(t_d) / scale
    res = _finish_fit(("gamma", "t0"), q * scale, r, jac, t_d, n)
    res.extra["gamma_over_2pi_hz"] = res["gamma"] / (2 * math.pi)
    return res


def fit_power_law(x, y) -> FitResult:
    """y = A x^p by linear least squares in log-log space."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    if lx.size < 2:
        raise ValueError("need at least two points")
    design = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    r = design @ coef - ly
    res = _finish_fit(("exponent", "log_prefactor"), coef, r, design, ly, 1)
    return res


# ---------------------------------------------------------------- phase

def dominant_frequency(t, a) -> float:
    """Strongest positive-frequency component of a complex series (Hz)."""
    spec = spectrum_of(t, a, "hann")
    pos = spec.freq_hz > 0
    mag = np.where(pos, spec.magnitude, -np.inf)
    i = int(np.argmax(mag))
    p, _ = parabolic_vertex(spec.magnitude, i)
    return float(spec.freq_hz[i] + p * spec.bin_hz)


def emission_phase(trace, window: Sequence[float], min_amplitude: float = 1e-6) -> float:
    """Phase of the emitted field in a time window, in [0, 2 pi).

    The field is demodulated at its strongest positive-frequency component
    and the phases are averaged on the circle with |a|^2 weights. The result
    rotates with the drive phase. ``min_amplitude`` is relative to the
    trace's peak |a|.
    """
    t_start, t_end = window
    if t_start < trace.drive_end:
        raise ValueError("window must start after the drive")
    sel = (trace.t >= t_start) & (trace.t <= t_end)
    if sel.sum() < 8:
        raise AnalysisError("window holds too few samples")
    t, a = trace.t[sel], trace.a[sel]
    peak = np.abs(trace.a).max()
    if peak == 0 or np.abs(a).max() < min_amplitude * peak:
        raise AnalysisError("field amplitude below threshold in window")
    f = dominant_frequency(t, a)
    z = a * np.exp(-2j * math.pi * f * t)
    # |a|^2-weighted mean of unit phasors z/|z|
    s = np.sum(np.abs(a) * z)
    return float(np.angle(s) % (2 * math.pi))


def circular_difference(a: float, b: float) -> float:
    """|a - b| folded into [0, pi]."""
    d = (a - b) % (2 * math.pi)
    return float(min(d, 2 * math.pi - d))
