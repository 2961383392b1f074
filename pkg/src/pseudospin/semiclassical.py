"""Mean-field (Maxwell-Bloch) dynamics of the spin ensemble and cavity.

Equations of motion in the frame rotating at ``omega_frame``::

    da/dt  = -(kappa + i dc) a - i g s - i V(t)
    ds/dt  = -(gamma + i ds) s + 2 i g a z
    dz/dt  = i g (a* s - a s*)

with a = <a>, s = <S->, z = <Sz>. Propagation runs in units normalized by N
(see :mod:`pseudospin._mb_fallback`), where only G = g sqrt(N) and
V/sqrt(N) appear.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from . import io, kernels
from ._numeric import local_maxima, local_minima, parabolic_vertex, quadratic_at
from .core import (BlochCoordinates, PhysicalParams, SemiclassicalState, TWO_PI,
                   ValidationError, to_hz, validate)
from .integrator import IntegrationError, IntegratorConfig, uniform_grid

log = logging.getLogger(__name__)

DEFAULT_DEAD_TIME = 3e-6
DEFAULT_PULSE = 200e-9
#: Tolerances for the normalized state (components are O(1)).
DEFAULT_INTEGRATOR = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13)


class TipAngleError(RuntimeError):
    pass


class CalibrationError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DriveSegment:
    t_start: float
    t_end: float
    amplitude: float
    phase: float = 0.0

    @property
    def value(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class DriveEnvelope:
    """Piecewise-constant complex drive, zero outside its segments.

    Segments are half-open intervals [t_start, t_end).
    """

    segments: tuple = ()

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        prev_end = -math.inf
        for seg in segs:
            if not seg.t_end > seg.t_start:
                raise ValueError("drive segment must have positive duration")
            if seg.t_start < prev_end:
                raise ValueError("drive segments must be ordered and non-overlapping")
            if seg.amplitude < 0:
                raise ValueError("drive amplitude must be non-negative")
            prev_end = seg.t_end

    @classmethod
    def rectangular(cls, amplitude: float, duration: float = DEFAULT_PULSE,
                    phase: float = 0.0, t_start: float = 0.0) -> "DriveEnvelope":
        return cls((DriveSegment(t_start, t_start + duration, amplitude, phase),))

    @classmethod
    def none(cls) -> "DriveEnvelope":
        return cls(())

    @property
    def end(self) -> float:
        return self.segments[-1].t_end if self.segments else 0.0

    @property
    def phase(self) -> float:
        """Phase of the first segment; sets the rotation axis of the spin."""
        return self.segments[0].phase if self.segments else 0.0

    def value(self, t: float) -> complex:
        for seg in self.segments:
            if seg.t_start <= t < seg.t_end:
                return seg.value
        return 0j

    def scaled(self, factor: float) -> "DriveEnvelope":
        return DriveEnvelope(tuple(replace(s, amplitude=s.amplitude * factor)
                                   for s in self.segments))

    def shifted_phase(self, dphi: float) -> "DriveEnvelope":
        return DriveEnvelope(tuple(replace(s, phase=s.phase + dphi) for s in self.segments))

    def pieces(self, t0: float, t1: float):
        """Breakpoints and per-piece complex values covering [t0, t1]."""
        edges = {t0, t1}
        for seg in self.segments:
            for edge in (seg.t_start, seg.t_end):
                if t0 < edge < t1:
                    edges.add(edge)
        breaks = sorted(edges)
        values = [self.value(0.5 * (a + b)) for a, b in zip(breaks[:-1], breaks[1:])]
        return np.array(breaks), np.array(values, dtype=complex)

    def to_dict(self) -> dict:
        return {"segments": [{"t_start_s": s.t_start, "t_end_s": s.t_end,
                              "amplitude_hz": to_hz(s.amplitude), "phase_rad": s.phase}
                             for s in self.segments]}


@dataclass(frozen=True)
class FidExperiment:
    params: PhysicalParams
    drive: DriveEnvelope
    t_total: float
    output_dt: float
    dead_time: float = DEFAULT_DEAD_TIME
    initial_state: Optional[SemiclassicalState] = None
    integrator: IntegratorConfig = DEFAULT_INTEGRATOR

    def __post_init__(self):
        if not self.t_total > self.drive.end:
            raise ValueError("t_total must extend past the end of the drive")
        if self.dead_time < 0:
            raise ValueError("dead_time must be non-negative")
        if self.output_dt <= 0:
            raise ValueError("output_dt must be positive")


@dataclass
class SimulationTrace:
    """Sampled mean-field trajectory in physical units."""

    t: np.ndarray
    a: np.ndarray
    s_minus: np.ndarray
    s_z: np.ndarray
    params: PhysicalParams
    drive: DriveEnvelope
    dead_time: float = DEFAULT_DEAD_TIME
    integrator: IntegratorConfig = DEFAULT_INTEGRATOR
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> np.ndarray:
        return np.abs(self.a) ** 2

    @property
    def drive_end(self) -> float:
        return self.drive.end

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def in_phase(self) -> np.ndarray:
        """Field quadrature along the drive response; positive while driven."""
        return (1j * self.a * np.exp(-1j * self.drive.phase)).real

    @property
    def analysis_mask(self) -> np.ndarray:
        """Samples the receiver would record (after the pulse and dead time)."""
        return self.t >= self.drive_end + self.dead_time

    def state(self, i: int) -> SemiclassicalState:
        return SemiclassicalState(complex(self.a[i]), complex(self.s_minus[i]),
                                  float(self.s_z[i]))

    def rotation_angle(self) -> np.ndarray:
        """Unwrapped polar angle measured along the drive's rotation direction.

        Equal to the Bloch polar angle while the spin has not passed the north
        pole and keeps increasing beyond pi when it has.
        """
        p = -(self.s_minus * np.exp(-1j * self.drive.phase)).real
        return np.unwrap(np.arctan2(p, -self.s_z))

    def csv_bytes(self) -> bytes:
        return io.csv_bytes(
            ["t_s", "re_a", "im_a", "abs_a", "n", "re_sminus", "im_sminus", "s_z"],
            [self.t, self.a.real, self.a.imag, np.abs(self.a), self.n,
             self.s_minus.real, self.s_minus.imag, self.s_z])

    def metadata_dict(self, csv_hash: Optional[str] = None) -> dict:
        meta = {
            "params": self.params.to_hz_dict(),
            "drive": self.drive.to_dict(),
            "integrator": {"rel_tol": self.integrator.rel_tol,
                           "abs_tol": self.integrator.abs_tol,
                           "output_dt_s": self.dt},
            "dead_time_s": self.dead_time,
            **self.metadata,
        }
        if csv_hash is not None:
            meta["content_sha256"] = csv_hash
        return meta

    def write(self, path) -> dict:
        """Write ``path`` (.csv) and a ``.json`` sidecar; returns their hashes."""
        path = Path(path)
        data = self.csv_bytes()
        h_csv = io.write_bytes(path, data)
        h_json = io.write_json(path.with_suffix(".json"), self.metadata_dict(h_csv))
        return {path.name: h_csv, path.with_suffix(".json").name: h_json}

    @classmethod
    def read(cls, path, params: PhysicalParams, drive: DriveEnvelope,
             dead_time: float = DEFAULT_DEAD_TIME) -> "SimulationTrace":
        header, d = io.read_csv(path)
        col = {name: d[:, i] for i, name in enumerate(header)}
        return cls(col["t_s"], col["re_a"] + 1j * col["im_a"],
                   col["re_sminus"] + 1j * col["im_sminus"], col["s_z"],
                   params, drive, dead_time)


def maxwell_bloch_rhs(state: SemiclassicalState, t: float, params: PhysicalParams,
                      drive: DriveEnvelope) -> SemiclassicalState:
    """Time derivative of the mean-field state (physical units)."""
    g = params.coupling_g
    a, s, z = state.a, state.s_minus, state.s_z
    v = drive.value(t)
    da = -(params.kappa_total + 1j * params.delta_c) * a - 1j * g * s - 1j * v
    ds = -(params.gamma + 1j * params.delta_s) * s + 2j * g * a * z
    dz = (1j * g * (a.conjugate() * s - a * s.conjugate())).real
    return SemiclassicalState(da, ds, dz)


def _normalize(state: SemiclassicalState, n_spins: float) -> np.ndarray:
    rn = math.sqrt(n_spins)
    return np.array([state.a.real / rn, state.a.imag / rn, state.s_minus.real / n_spins,
                     state.s_minus.imag / n_spins, state.s_z / n_spins])


def _propagate(params, drive, initial, t_grid, integrator, backend=None):
    validate(params)
    n_spins = params.n_spins
    rn = math.sqrt(n_spins)
    y0 = _normalize(initial, n_spins)
    breaks, values = drive.pieces(float(t_grid[0]), float(t_grid[-1]))
    coeffs = (params.collective_g, params.kappa_total, params.gamma,
              params.delta_c, params.delta_s)
    y, final, n_steps = kernels.evolve(
        y0, coeffs, breaks, values.real / rn, values.imag / rn, t_grid,
        integrator.rel_tol, integrator.abs_tol, integrator.max_step, backend=backend)
    a = (y[:, 0] + 1j * y[:, 1]) * rn
    s = (y[:, 2] + 1j * y[:, 3]) * n_spins
    z = y[:, 4] * n_spins
    return a, s, z, n_steps


def run_fid(exp: FidExperiment, backend: Optional[str] = None) -> SimulationTrace:
    """Simulate a pulse followed by free evolution, starting from the ground state
    unless ``exp.initial_state`` says otherwise."""
    t = uniform_grid(0.0, exp.t_total, exp.output_dt)
    initial = exp.initial_state or SemiclassicalState.ground(exp.params.n_spins)
    try:
        a, s, z, n_steps = _propagate(exp.params, exp.drive, initial, t, exp.integrator,
                                      backend)
    except IntegrationError as exc:
        raise SimulationError(
            f"FID integration failed (N={exp.params.n_spins:.4g}, "
            f"drive={exp.drive.to_dict()}): {exc}") from exc
    return SimulationTrace(t, a, s, z, exp.params, exp.drive, exp.dead_time,
                           exp.integrator, {"n_steps": int(n_steps),
                                            "backend": backend or kernels.BACKEND})


def bloch_coordinates(state: SemiclassicalState) -> BlochCoordinates:
    r = state.bloch_radius
    if r <= 0:
        raise ValueError("Bloch angles undefined at zero radius")
    theta = math.acos(min(1.0, max(-1.0, -state.s_z / r)))
    phi = math.atan2(state.s_minus.imag, state.s_minus.real)
    return BlochCoordinates(theta, phi, r)


@dataclass(frozen=True)
class TipAngle:
    theta: float
    t: float
    n: float
    over_rotated: bool


def measure_tip(trace: SimulationTrace) -> TipAngle:
    """Tip angle and the time of the first photon-number minimum after the pulse.

    Below full inversion the angle is the polar angle when the cavity has
    emptied into the spin. When the pulse carries more than enough energy to
    invert the spin, the spin passes the north pole with ``n_res`` photons
    left, and the angle is reported as pi + 2 asin(sqrt(n_res/N)). Excitation
    deficit and excess then map symmetrically onto pi -/+ delta.
    """
    n = trace.n
    after = np.nonzero(trace.t > trace.drive_end)[0]
    if after.size < 3:
        raise TipAngleError("trace ends at the pulse")
    i0 = after[0]
    mins = local_minima(n[i0:]) + i0
    if mins.size == 0:
        raise TipAngleError("no photon-number minimum after the pulse")
    i = int(mins[0])
    p, n_min = parabolic_vertex(n, i)
    n_min = max(n_min, 0.0)
    t_min = trace.t[i] + p * trace.dt
    angle = trace.rotation_angle()
    maxs = local_maxima(n[i:]) + i
    stop = int(maxs[0]) if maxs.size else n.size - 1
    over = bool(angle[i:stop + 1].max() > math.pi)
    if over:
        theta = math.pi + 2.0 * math.asin(min(1.0, math.sqrt(n_min / trace.params.n_spins)))
    else:
        theta = float(quadratic_at(angle, i, p))
    return TipAngle(theta, t_min, n_min, over)


def tip_angle(trace: SimulationTrace) -> float:
    """Rotation angle prepared by the pulse; see :func:`measure_tip`."""
    return measure_tip(trace).theta


def _period(params: PhysicalParams) -> float:
    return TWO_PI / params.collective_g


def _calibration_run(params, amplitude, pulse_duration, phase, backend):
    period = _period(params)
    dt = min(period / 2000.0, pulse_duration / 20.0)
    horizon = 4.0 * period
    for _ in range(6):
        drive = DriveEnvelope.rectangular(amplitude, pulse_duration, phase)
        exp = FidExperiment(params, drive, pulse_duration + horizon, dt, 0.0)
        try:
            return tip_angle(run_fid(exp, backend))
        except TipAngleError:
            if amplitude == 0:
                raise
            horizon *= 2.0
    raise TipAngleError(f"no photon-number minimum within {horizon:.3g} s")


def calibrate_drive(params: PhysicalParams, target_theta: float,
                    pulse_duration: float = DEFAULT_PULSE, phase: float = 0.0,
                    backend: Optional[str] = None) -> float:
    """Rectangular-pulse amplitude (rad/s sqrt(photons)) giving ``target_theta``.

    Root-finds ``tip_angle(run_fid(...)) == target_theta`` to 1e-3 rad.
    """
    if not 0.0 < target_theta < TWO_PI:
        raise ValueError("target_theta must lie in (0, 2 pi)")
    if pulse_duration <= 0:
        raise ValueError("pulse_duration must be positive")
    validate(params)
    rn = math.sqrt(params.n_spins)
    # Impulsive, lossless estimate: the pulse leaves x = v T in the cavity.
    if target_theta <= math.pi:
        x0 = math.sin(0.5 * target_theta)
    else:
        x0 = math.sqrt(1.0 + math.sin(0.5 * (target_theta - math.pi)) ** 2)
    guess = max(x0, 1e-6) / pulse_duration * rn

    def f(amp):
        return _calibration_run(params, amp, pulse_duration, phase, backend) - target_theta

    lo, hi = 0.5 * guess, 1.5 * guess
    scanned = [lo, hi]
    try:
        f_lo = f(lo)
        for _ in range(40):
            if f_lo < 0:
                break
            lo *= 0.5
            scanned.append(lo)
            f_lo = f(lo)
        f_hi = f(hi)
        for _ in range(40):
            if f_hi > 0:
                break
            hi *= 1.5
            scanned.append(hi)
            f_hi = f(hi)
    except TipAngleError as exc:
        raise CalibrationError(
            f"tip angle undefined while bracketing (amplitudes {min(scanned):.4g}"
            f"..{max(scanned):.4g}): {exc}") from exc
    if not (f_lo < 0 < f_hi):
        raise CalibrationError(
            f"cannot bracket theta={target_theta:.6g} over amplitudes "
            f"{min(scanned):.4g}..{max(scanned):.4g}")
    amp = brentq(f, lo, hi, xtol=1e-12 * hi, rtol=1e-13, maxiter=200)
    if abs(f(amp)) > 1e-3:
        raise CalibrationError(f"root-finder stalled at amplitude {amp:.6g}")
    return float(amp)


def fid_at_angle(params: PhysicalParams, theta: float, t_total: float,
                 output_dt: Optional[float] = None, pulse_duration: float = DEFAULT_PULSE,
                 dead_time: float = DEFAULT_DEAD_TIME, phase: float = 0.0,
                 amplitude: Optional[float] = None,
                 backend: Optional[str] = None) -> SimulationTrace:
    """Calibrate a pulse for ``theta`` (unless ``amplitude`` is given) and run the FID."""
    if amplitude is None:
        amplitude = calibrate_drive(params, theta, pulse_duration, phase, backend)
    if output_dt is None:
        output_dt = default_output_dt(params)
    drive = DriveEnvelope.rectangular(amplitude, pulse_duration, phase)
    trace = run_fid(FidExperiment(params, drive, t_total, output_dt, dead_time), backend)
    trace.metadata.update({"theta_rad": float(theta), "amplitude_hz": to_hz(amplitude)})
    return trace


def default_output_dt(params: PhysicalParams) -> float:
    """Sampling fine enough for 5-point second differences of n(t)."""
    return 1.0 / (200.0 * to_hz(params.collective_g))


@dataclass
class PowerSweep:
    thetas: np.ndarray
    amplitudes: list
    traces: list
    failures: dict

    def in_phase_map(self) -> np.ndarray:
        """Rows of the in-phase field quadrature, one per angle (NaN for failures)."""
        n_t = max(tr.t.size for tr in self.traces if tr is not None)
        out = np.full((len(self.traces), n_t), np.nan)
        for k, tr in enumerate(self.traces):
            if tr is not None:
                out[k, :tr.t.size] = tr.in_phase
        return out


def _sweep_point(args):
    params, theta, amplitude, pulse, t_total, dt, dead, backend = args
    try:
        if amplitude is None:
            amplitude = calibrate_drive(params, theta, pulse, 0.0, backend)
        trace = fid_at_angle(params, theta, t_total, dt, pulse, dead, amplitude=amplitude,
                             backend=backend)
        return amplitude, trace, None
    except (CalibrationError, SimulationError, TipAngleError) as exc:
        return amplitude, None, f"{type(exc).__name__}: {exc}"


def power_sweep(params: PhysicalParams, theta_grid: Sequence[float],
                pulse_duration: float = DEFAULT_PULSE, t_total: float = 30e-6,
                output_dt: Optional[float] = None, dead_time: float = DEFAULT_DEAD_TIME,
                workers: int = 1, backend: Optional[str] = None) -> PowerSweep:
    """One FID per rotation angle.

    Angles inside (0, 2 pi) are calibrated individually. Larger angles (multiple
    rotations) use one amplitude scale, linear in angle, anchored at the
    amplitude that fully inverts the spin.
    """
    if output_dt is None:
        output_dt = default_output_dt(params)
    thetas = np.asarray(theta_grid, dtype=float)
    if np.any(thetas <= 0):
        raise ValueError("rotation angles must be positive")
    amplitudes: list = [None] * thetas.size
    failures: dict = {}
    if np.any(thetas >= TWO_PI):
        try:
            a_pi = calibrate_drive(params, math.pi, pulse_duration, 0.0, backend)
        except CalibrationError as exc:
            a_pi = None
            for k in np.nonzero(thetas >= TWO_PI)[0]:
                failures[int(k)] = f"CalibrationError: {exc}"
        if a_pi is not None:
            for k in np.nonzero(thetas >= TWO_PI)[0]:
                amplitudes[k] = a_pi * thetas[k] / math.pi
    jobs = [(params, float(th), amplitudes[k], pulse_duration, t_total, output_dt,
             dead_time, backend) for k, th in enumerate(thetas) if k not in failures]
    keys = [k for k in range(thetas.size) if k not in failures]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    traces: list = [None] * thetas.size
    for k, (amp, trace, err) in zip(keys, results):
        amplitudes[k] = amp
        traces[k] = trace
        if err is not None:
            failures[k] = err
            log.warning("sweep point theta=%.6g failed: %s", thetas[k], err)
    return PowerSweep(thetas, amplitudes, traces, failures)


@dataclass(frozen=True)
class ConcavityRecord:
    t: float
    n: float
    n_ddot_measured: float
    n_ddot_model: float
    kind: str


def concavity_model(state: SemiclassicalState, params: PhysicalParams) -> float:
    """Second derivative of n near an extremum with losses neglected.

    Uses <S+S-> + <S-S+> ~ 2|<S->|^2 and keeps the vacuum term 1/2.
    """
    g2 = params.coupling_g ** 2
    return g2 * 2.0 * abs(state.s_minus) ** 2 + 4.0 * g2 * (state.photon_number + 0.5) * state.s_z


def second_derivative(y: np.ndarray, dt: float) -> np.ndarray:
    """5-point central second difference; NaN in the two edge samples."""
    out = np.full(y.shape, np.nan)
    out[2:-2] = (-y[4:] + 16 * y[3:-1] - 30 * y[2:-2] + 16 * y[1:-3] - y[:-4]) / (12 * dt * dt)
    return out


def concavity_check(trace: SimulationTrace, params: Optional[PhysicalParams] = None):
    """Measured and modelled second derivative of n(t) at each extremum after the pulse."""
    params = params or trace.params
    f_exchange = to_hz(params.collective_g)
    if trace.dt > 1.0 / (40.0 * f_exchange) * (1 + 1e-9):
        raise ValueError(
            f"output_dt={trace.dt:.3g} s too coarse; need <= {1 / (40 * f_exchange):.3g} s")
    n = trace.n
    nddot = second_derivative(n, trace.dt)
    start = int(np.searchsorted(trace.t, trace.drive_end, side="right"))
    records = []
    for kind, idx in (("min", local_minima(n[start:])), ("max", local_maxima(n[start:]))):
        for i in idx + start:
            if 2 <= i < n.size - 2:
                records.append(ConcavityRecord(float(trace.t[i]), float(n[i]),
                                               float(nddot[i]),
                                               concavity_model(trace.state(i), params), kind))
    return sorted(records, key=lambda r: r.t)


def linearized_response(params: PhysicalParams, drive: DriveEnvelope, t: np.ndarray,
                        initial: Optional[SemiclassicalState] = None) -> np.ndarray:
    """Closed-form cavity field with Sz frozen at -N/2 (two coupled oscillators).

    Exact piecewise solution x(t) = e^{M t}(x0 + M^-1 b) - M^-1 b for each
    constant-drive piece, with the 2x2 exponential written out analytically.
    """
    rn = math.sqrt(params.n_spins)
    G = params.collective_g
    m11 = -(params.kappa_total + 1j * params.delta_c)
    m22 = -(params.gamma + 1j * params.delta_s)
    M = np.array([[m11, -1j * G], [-1j * G, m22]])
    mu = 0.5 * (m11 + m22)
    delta = np.sqrt(complex(0.25 * (m11 - m22) ** 2 - G * G))
    minv = np.linalg.inv(M)
    eye = np.eye(2)

    def expm_apply(tau, x):
        tau = np.asarray(tau, dtype=float)[..., None]
        if abs(delta) < 1e-12 * abs(G):
            sh = tau
        else:
            sh = np.sinh(delta * tau) / delta
        ch = np.cosh(delta * tau)
        ex = np.exp(mu * tau)
        mx = (M - mu * eye) @ x
        return ex * (ch * x[None, :] + sh * mx[None, :])

    init = initial or SemiclassicalState.ground(params.n_spins)
    # normalized amplitudes alpha = a/sqrt(N), beta = s/N
    x = np.array([init.a / rn, init.s_minus / params.n_spins], dtype=complex)
    t = np.asarray(t, dtype=float)
    if t[0] < 0:
        raise ValueError("times must be non-negative")
    out = np.empty(t.size, dtype=complex)
    breaks, values = drive.pieces(0.0, float(t[-1]))
    for k in range(values.size):
        t0, t1 = breaks[k], breaks[k + 1]
        b = np.array([-1j * values[k] / rn, 0.0])
        shift = minv @ b
        last = k == values.size - 1
        sel = (t >= t0) & ((t <= t1) if last else (t < t1))
        if np.any(sel):
            out[sel] = (expm_apply(t[sel] - t0, x + shift) - shift)[:, 0]
        x = expm_apply([t1 - t0], x + shift)[0] - shift
    return out * rn
