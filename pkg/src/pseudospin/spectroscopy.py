"""Linear-response spectroscopy of the coupled spin-cavity system.

All quantities are computed with S_z frozen at -N/2, so the ensemble behaves
as a damped oscillator coupled to the cavity with strength G = g sqrt(N).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from ._numeric import local_minima, parabolic_vertex
from .core import MU_B_OVER_H, TWO_PI, PhysicalParams, from_hz, to_hz, validate

#: Free-electron g-factor; donor electrons in silicon sit close to it.
G_ELECTRON = 2.0023


@dataclass(frozen=True)
class PolaritonPair:
    """Complex angular eigenfrequencies, sorted by real part (lower first)."""

    lower: complex
    upper: complex

    @property
    def splitting(self) -> float:
        return self.upper.real - self.lower.real

    @property
    def half_widths(self) -> tuple:
        return (-self.lower.imag, -self.upper.imag)


@dataclass
class Spectrum:
    freq_hz: np.ndarray
    s11: np.ndarray
    params: PhysicalParams
    metadata: dict = field(default_factory=dict)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.s11) ** 2

    def csv_bytes(self) -> bytes:
        return io.csv_bytes(["freq_hz", "re_s11", "im_s11", "abs_s11"],
                            [self.freq_hz, self.s11.real, self.s11.imag, np.abs(self.s11)])

    def write(self, path) -> dict:
        path = Path(path)
        h = io.write_bytes(path, self.csv_bytes())
        meta = {"params": self.params.to_hz_dict(), "content_sha256": h, **self.metadata}
        hj = io.write_json(path.with_suffix(".json"), meta)
        return {path.name: h, path.with_suffix(".json").name: hj}


def polariton_modes(params: PhysicalParams) -> PolaritonPair:
    """Eigenvalues of [[w_c - i kappa, G], [G, w_s - i gamma]]."""
    validate(params)
    G = params.collective_g
    m = np.array([[params.omega_c - 1j * params.kappa_total, G],
                  [G, params.omega_s - 1j * params.gamma]])
    ev = np.linalg.eigvals(m)
    ev = ev[np.argsort(ev.real)]
    return PolaritonPair(complex(ev[0]), complex(ev[1]))


def s11_response(params: PhysicalParams, omega: np.ndarray) -> np.ndarray:
    """Reflection coefficient at angular probe frequencies ``omega``."""
    omega = np.asarray(omega, dtype=float)
    G2 = params.collective_g ** 2
    cavity = 1j * (params.omega_c - omega) + params.kappa_total
    if G2 == 0:
        return 1.0 - 2.0 * params.kappa_ext / cavity
    # common denominator: no division by the spin term, which may vanish
    spin = 1j * (params.omega_s - omega) + params.gamma
    return 1.0 - 2.0 * params.kappa_ext * spin / (cavity * spin + G2)


def s11_spectrum(params: PhysicalParams, freq_grid_hz) -> Spectrum:
    """|S11| spectrum over laboratory frequencies in Hz."""
    freq = np.asarray(freq_grid_hz, dtype=float)
    if freq.size == 0:
        raise ValueError("frequency grid is empty")
    validate(params)
    return Spectrum(freq, s11_response(params, from_hz(freq)), params)


def default_freq_grid(params: PhysicalParams, span_hz: Optional[float] = None,
                      step_hz: float = 2e3) -> np.ndarray:
    """Grid centred on the cavity covering the polaritons with margin."""
    if span_hz is None:
        span_hz = 4.0 * to_hz(params.collective_g) + 20.0 * to_hz(params.kappa_total + params.gamma)
    fc = to_hz(params.omega_c)
    n = int(round(span_hz / step_hz))
    return fc + step_hz * (np.arange(n + 1) - n / 2)


@dataclass(frozen=True)
class Dip:
    freq_hz: float
    depth: float
    fwhm_hz: float


def find_dips(spectrum: Spectrum, max_dips: int = 2, power: bool = True) -> list:
    """Deepest local minima of |S11| (or |S11|^2), parabolic-refined, with FWHM.

    The width is measured on the dip's own baseline (unity reflection): half
    depth sits at (1 + y_min)/2.
    """
    y = spectrum.power if power else np.abs(spectrum.s11)
    f = spectrum.freq_hz
    df = f[1] - f[0]
    idx = local_minima(y)
    idx = idx[np.argsort(y[idx])][:max_dips]
    dips = []
    for i in sorted(idx):
        p, ymin = parabolic_vertex(y, i)
        half = 0.5 * (1.0 + ymin)
        dips.append(Dip(float(f[i] + p * df), float(ymin), _fwhm(f, y, i, half)))
    return dips


def _fwhm(f, y, i, half):
    def crossing(step):
        j = i
        while 0 <= j + step < y.size and y[j + step] < half:
            j += step
        k = j + step
        if not 0 <= k < y.size:
            return np.nan
        # linear interpolation between j (below) and k (above)
        return f[j] + (f[k] - f[j]) * (half - y[j]) / (y[k] - y[j])
    return float(crossing(1) - crossing(-1))


def dip_separation(spectrum: Spectrum) -> float:
    dips = find_dips(spectrum, 2)
    if len(dips) < 2:
        raise ValueError("fewer than two dips in spectrum")
    return abs(dips[1].freq_hz - dips[0].freq_hz)


def field_to_omega_s(b0_tesla, g_factor: float = G_ELECTRON):
    """Zeeman angular frequency g mu_B B0 / hbar."""
    return TWO_PI * g_factor * MU_B_OVER_H * np.asarray(b0_tesla, dtype=float)


def omega_s_to_field(omega_s, g_factor: float = G_ELECTRON):
    return np.asarray(omega_s, dtype=float) / (TWO_PI * g_factor * MU_B_OVER_H)


@dataclass
class CrossingMap:
    omega_s: np.ndarray
    freq_hz: np.ndarray
    abs_s11: np.ndarray
    params: PhysicalParams
    g_factor: float = G_ELECTRON

    @property
    def field_tesla(self) -> np.ndarray:
        return omega_s_to_field(self.omega_s, self.g_factor)

    def mode_frequencies(self) -> np.ndarray:
        """Polariton real parts (Hz) per row, shape (rows, 2)."""
        out = np.empty((self.omega_s.size, 2))
        for k, ws in enumerate(self.omega_s):
            pair = polariton_modes(self.params.replace(omega_s=float(ws)))
            out[k] = to_hz(pair.lower.real), to_hz(pair.upper.real)
        return out

    def write(self, path) -> dict:
        path = Path(path)
        h = io.write_bytes(path, io.matrix_csv_bytes(self.abs_s11))
        axes = {"rows": "omega_s", "columns": "freq_hz",
                "omega_s_hz": to_hz(self.omega_s), "field_tesla": self.field_tesla,
                "freq_hz": self.freq_hz, "g_factor": self.g_factor,
                "params": self.params.to_hz_dict(), "content_sha256": h}
        hj = io.write_json(path.with_suffix(".json"), axes)
        return {path.name: h, path.with_suffix(".json").name: hj}


def avoided_crossing_map(params: PhysicalParams, omega_s_grid, freq_grid_hz,
                         g_factor: float = G_ELECTRON) -> CrossingMap:
    """|S11| with one row per spin frequency."""
    ws = np.asarray(omega_s_grid, dtype=float)
    freq = np.asarray(freq_grid_hz, dtype=float)
    if ws.size == 0 or freq.size == 0:
        raise ValueError("grids must be non-empty")
    validate(params)
    omega = from_hz(freq)
    rows = np.array([np.abs(s11_response(params.replace(omega_s=float(w)), omega)) for w in ws])
    return CrossingMap(ws, freq, rows, params, g_factor)
