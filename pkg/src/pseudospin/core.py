"""Parameters, state types and closed-form figures of merit.

All frequencies and rates are angular (rad/s) inside the package. Values read
from or written to files are ordinary frequencies in Hz; :func:`to_hz` and
:func:`from_hz` are the only conversion points.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

TWO_PI = 2.0 * math.pi

#: Bohr magneton over Planck constant, Hz/T.
MU_B_OVER_H = 13.996244936e9


class ValidationError(ValueError):
    """Raised when a parameter set is physically meaningless."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def to_hz(omega):
    return omega / TWO_PI


def from_hz(freq):
    return freq * TWO_PI


@dataclass(frozen=True)
class PhysicalParams:
    """Parameters of a uniform spin ensemble coupled to one cavity mode.

    Attributes
    ----------
    omega_c, omega_s : float
        Cavity and spin angular frequencies, rad/s.
    coupling_g : float
        Single-spin coupling, rad/s.
    n_spins : float
        Net polarization N = N_up - N_down. Real valued.
    kappa_int, kappa_ext : float
        Internal and external cavity amplitude decay rates, rad/s.
    gamma : float
        Spin coherence decay rate, rad/s.
    omega_frame : float
        Rotating frame reference, rad/s.
    """

    omega_c: float
    omega_s: float
    coupling_g: float
    n_spins: float
    kappa_int: float
    kappa_ext: float
    gamma: float
    omega_frame: float

    @property
    def kappa_total(self) -> float:
        return self.kappa_int + self.kappa_ext

    @property
    def collective_g(self) -> float:
        return self.coupling_g * math.sqrt(self.n_spins)

    @property
    def delta_c(self) -> float:
        return self.omega_c - self.omega_frame

    @property
    def delta_s(self) -> float:
        return self.omega_s - self.omega_frame

    def replace(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    def with_collective_g(self, collective_g: float) -> "PhysicalParams":
        """Return a copy whose g is rescaled so that g*sqrt(N) == collective_g."""
        return replace(self, coupling_g=collective_g / math.sqrt(self.n_spins))

    def to_hz_dict(self) -> dict:
        """Ordinary-frequency view used by every file format."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name if f.name == "n_spins" else f"{f.name}_hz"] = (
                value if f.name == "n_spins" else to_hz(value)
            )
        return out

    @classmethod
    def from_hz_dict(cls, values: dict) -> "PhysicalParams":
        kwargs = {}
        for f in fields(cls):
            if f.name == "n_spins":
                kwargs[f.name] = float(values["n_spins"])
            else:
                kwargs[f.name] = from_hz(float(values[f"{f.name}_hz"]))
        return cls(**kwargs)

    def as_dict(self) -> dict:
        return asdict(self)


def gamma_from_t2star(t2star: float) -> float:
    """Coherence decay rate (rad/s) for a dephasing time T2* in seconds.

    gamma = 1/T2*, i.e. gamma/2pi = 1/(2 pi T2*) in Hz; T2* = 9 us gives
    17.7 kHz.
    """
    if t2star <= 0:
        raise ValidationError("t2star", "must be positive")
    return 1.0 / t2star


def paper_2016(kappa_ext_fraction: float = 0.5) -> PhysicalParams:
    """Calibration preset for the enriched 28Si:P ensemble.

    The measured vacuum Rabi splitting (580 kHz) is taken as exact and the
    single-spin coupling is derived from it.
    """
    n_spins = 3.6e13
    collective = from_hz(580e3) / 2.0
    kappa = from_hz(60e3)
    omega_c = from_hz(9.6e9)
    return PhysicalParams(
        omega_c=omega_c,
        omega_s=omega_c,
        coupling_g=collective / math.sqrt(n_spins),
        n_spins=n_spins,
        kappa_int=kappa * (1.0 - kappa_ext_fraction),
        kappa_ext=kappa * kappa_ext_fraction,
        gamma=from_hz(18e3),
        omega_frame=omega_c,
    )


#: name -> (factory, {field: provenance note})
PRESETS = {
    "paper-2016": (
        paper_2016,
        {
            "n_spins": "measured net polarization, 3.6e13 spins",
            "coupling_g_hz": "derived: 2 g sqrt(N) = 580 kHz exactly",
            "kappa_int_hz": "half of kappa/2pi = 60 kHz (split is a default)",
            "kappa_ext_hz": "half of kappa/2pi = 60 kHz (split is a default)",
            "gamma_hz": "spin dephasing, 18 kHz",
            "omega_c_hz": "X-band cavity, 9.6 GHz",
            "omega_s_hz": "tuned to cavity resonance",
            "omega_frame_hz": "rotating frame at the cavity frequency",
        },
    ),
}


def preset(name: str, **overrides) -> PhysicalParams:
    try:
        factory, _ = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None
    params = factory()
    return replace(params, **overrides) if overrides else params


def _check(params: PhysicalParams) -> None:
    for f in fields(params):
        value = getattr(params, f.name)
        if not math.isfinite(value):
            raise ValidationError(f.name, f"must be finite, got {value!r}")
        if value < 0:
            raise ValidationError(f.name, f"must be non-negative, got {value!r}")
    if params.n_spins <= 0:
        raise ValidationError("n_spins", f"must be positive, got {params.n_spins!r}")


def validate(params: PhysicalParams) -> dict:
    """Check a parameter set and classify its coupling regime.

    Weak coupling is not an error; it is where the dephasing rate is measured.

    Returns
    -------
    dict
        ``strong_coupling``: 2 g sqrt(N) > kappa + gamma.
        ``high_cooperativity``: C > 1 (False when a loss rate is zero and
        C is undefined).
    """
    _check(params)
    losses = params.kappa_total + params.gamma
    strong = 2.0 * params.collective_g > losses
    try:
        high_coop = cooperativity(params) > 1.0
    except ZeroDivisionError:
        high_coop = False
    return {"strong_coupling": bool(strong), "high_cooperativity": bool(high_coop)}


def rabi_splitting(params: PhysicalParams) -> float:
    """Vacuum Rabi splitting 2 g sqrt(N) in rad/s."""
    _check(params)
    return 2.0 * params.collective_g


def cooperativity(params: PhysicalParams) -> float:
    """C = g^2 N / (kappa gamma). Raises ZeroDivisionError for a lossless system."""
    _check(params)
    if params.kappa_total == 0 or params.gamma == 0:
        raise ZeroDivisionError("cooperativity undefined for zero kappa or gamma")
    return params.coupling_g**2 * params.n_spins / (params.kappa_total * params.gamma)


@dataclass(frozen=True)
class SemiclassicalState:
    """Mean-field triple (<a>, <S->, <Sz>) in physical units."""

    a: complex
    s_minus: complex
    s_z: float

    @classmethod
    def ground(cls, n_spins: float) -> "SemiclassicalState":
        return cls(0j, 0j, -0.5 * n_spins)

    @classmethod
    def on_sphere(cls, n_spins: float, theta: float, phi: float = 0.0, a: complex = 0j):
        """Spin at polar angle theta from the south pole, azimuth phi."""
        r = 0.5 * n_spins
        return cls(complex(a), r * math.sin(theta) * complex(math.cos(phi), math.sin(phi)),
                   -r * math.cos(theta))

    @property
    def bloch_radius(self) -> float:
        return math.sqrt(abs(self.s_minus) ** 2 + self.s_z**2)

    @property
    def photon_number(self) -> float:
        return abs(self.a) ** 2

    def to_array(self) -> np.ndarray:
        return np.array([self.a.real, self.a.imag, self.s_minus.real,
                         self.s_minus.imag, self.s_z])

    @classmethod
    def from_array(cls, y) -> "SemiclassicalState":
        return cls(complex(y[0], y[1]), complex(y[2], y[3]), float(y[4]))


@dataclass(frozen=True)
class BlochCoordinates:
    polar_theta: float
    azimuth_phi: float
    radius: float
