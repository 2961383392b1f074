"""Adaptive Dormand-Prince 5(4) integration with dense output.

Complex systems are integrated as interleaved (real, imag) pairs so the
stepper only ever sees real vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

# Dormand & Prince (1980) tableau, FSAL form.
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)
# Hairer's 4th order continuous extension.
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
MAX_STEPS = 10_000_000


class IntegrationError(RuntimeError):
    """Integration could not proceed; ``t_last`` is the last accepted time."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last good t={t_last:.9g})")
        self.t_last = t_last


@dataclass
class OdeProblem:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t_start: float
    t_end: float
    initial_state: np.ndarray

    def __post_init__(self):
        self.initial_state = np.asarray(self.initial_state, dtype=float)
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")

    @property
    def dimension(self) -> int:
        return self.initial_state.size


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float | Sequence[float] = 1e-12
    max_step: float = math.inf
    output_dt: Optional[float] = None

    def __post_init__(self):
        if self.rel_tol <= 0 or np.any(np.asarray(self.abs_tol) <= 0):
            raise ValueError("tolerances must be positive")
        if self.output_dt is not None and self.output_dt <= 0:
            raise ValueError("output_dt must be positive")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    final: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    stats: dict = field(default_factory=dict)


def uniform_grid(t_start: float, t_end: float, dt: float) -> np.ndarray:
    """t_start + k*dt for every k with t <= t_end (within rounding)."""
    n = int(math.floor((t_end - t_start) / dt * (1 + 1e-12))) + 1
    return t_start + dt * np.arange(n)


def _initial_step(rhs, t0, y0, f0, t_end, rtol, atol, max_step):
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0, max_step)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_end - t0, max_step)


def integrate(problem: OdeProblem, config: IntegratorConfig,
              t_eval: Optional[np.ndarray] = None) -> Trajectory:
    """Integrate ``problem`` and sample the solution.

    Samples are taken on the uniform grid ``t_start + k*output_dt`` unless
    explicit ``t_eval`` times (ascending, inside the interval) are given. A
    sample at ``t_start`` is the initial state exactly. Between accepted
    steps the solution is interpolated with the 4th order continuous
    extension of the pair.

    Raises
    ------
    IntegrationError
        On step-size underflow or a non-finite derivative.
    """
    rhs = problem.rhs
    t0, t_end = float(problem.t_start), float(problem.t_end)
    y = problem.initial_state.astype(float).copy()
    rtol = config.rel_tol
    atol = np.broadcast_to(np.asarray(config.abs_tol, dtype=float), y.shape)
    max_step = min(config.max_step, t_end - t0)

    if t_eval is None:
        dt = config.output_dt if config.output_dt is not None else (t_end - t0)
        t_eval = uniform_grid(t0, t_end, dt)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size and (t_eval[0] < t0 or t_eval[-1] > t_end * (1 + 1e-12) + 1e-300):
        raise ValueError("t_eval outside the integration interval")
    out = np.empty((t_eval.size, y.size))
    k_out = 0
    while k_out < t_eval.size and t_eval[k_out] <= t0:
        out[k_out] = y
        k_out += 1

    f = rhs(t0, y)
    n_rhs = 1
    if not np.all(np.isfinite(f)):
        raise IntegrationError("non-finite derivative", t0)
    h = _initial_step(rhs, t0, y, f, t_end, rtol, atol, max_step)
    n_rhs += 1
    t = t0
    n_steps = n_rejected = 0
    rejected_last = False

    while t < t_end:
        if n_steps + n_rejected > MAX_STEPS:
            raise IntegrationError("too many steps", t)
        if h < 16 * np.finfo(float).eps * max(abs(t), abs(t_end)):
            raise IntegrationError("step size underflow", t)
        last = t + h >= t_end - 1e-15 * abs(t_end)
        if last:
            h = t_end - t

        k1 = f
        k2 = rhs(t + C2 * h, y + h * (A21 * k1))
        k3 = rhs(t + C3 * h, y + h * (A31 * k1 + A32 * k2))
        k4 = rhs(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = rhs(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = rhs(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        y_new = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
        k7 = rhs(t + h, y_new)
        n_rhs += 6
        if not np.all(np.isfinite(k7)) or not np.all(np.isfinite(y_new)):
            raise IntegrationError("non-finite derivative", t)

        err_vec = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(float(np.mean((err_vec / scale) ** 2)))

        if err <= 1.0:
            t_new = t_end if last else t + h
            if k_out < t_eval.size and t_eval[k_out] <= t_new:
                dy = y_new - y
                bspl = h * k1 - dy
                r4 = dy - h * k7 - bspl
                r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
                while k_out < t_eval.size and t_eval[k_out] <= t_new:
                    s = (t_eval[k_out] - t) / h
                    s1 = 1.0 - s
                    out[k_out] = y + s * (dy + s1 * (bspl + s * (r4 + s1 * r5)))
                    k_out += 1
            t, y, f = t_new, y_new, k7
            n_steps += 1
            fac = FAC_MAX if err == 0 else min(FAC_MAX, max(FAC_MIN, SAFETY * err ** -0.2))
            if rejected_last:
                fac = min(fac, 1.0)
            rejected_last = False
            h = min(h * fac, max_step)
        else:
            n_rejected += 1
            rejected_last = True
            h *= max(FAC_MIN, SAFETY * err ** -0.2)

    # grid points a rounding error beyond t_end
    while k_out < t_eval.size:
        out[k_out] = y
        k_out += 1
    return Trajectory(t_eval, out, y.copy(), n_steps, n_rejected, n_rhs)


def complex_to_real(z: np.ndarray) -> np.ndarray:
    """Interleave (re, im) pairs."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def real_to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]
