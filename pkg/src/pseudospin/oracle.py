"""Exact Tavis-Cummings dynamics in the symmetric Dicke sector.

Basis states are |S, M> (x) |n> with M = -S..S and n = 0..n_max. Closed
systems propagate a state vector; open systems propagate the vectorized
density matrix under the Lindblad generator with collapse operators
sqrt(2 kappa) a (cavity loss) and sqrt(2 gamma) S_z (collective dephasing).
These rates make <a> and <S-> decay at kappa and gamma, matching the
mean-field equations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.integrate import trapezoid
from scipy.special import gammaln

from . import semiclassical as sc
from ._numeric import local_maxima, parabolic_vertex
from .core import PhysicalParams, SemiclassicalState

#: Maximum stored state entries: d for a state vector, d^2 for a density matrix.
DEFAULT_DIMENSION_CAP = 40_000
CUTOFF_TOLERANCE = 1e-6


class OracleError(RuntimeError):
    pass


class CutoffError(OracleError):
    def __init__(self, message: str, boundary_population: float):
        super().__init__(message)
        self.boundary_population = boundary_population


@dataclass(frozen=True)
class DickeFockBasis:
    """Product basis |S, M> (x) |n>; index = (M + S)(n_max + 1) + n."""

    spin: float
    n_max: int

    def __post_init__(self):
        two_s = 2.0 * self.spin
        if self.spin <= 0 or abs(two_s - round(two_s)) > 1e-12:
            raise ValueError("spin must be a positive half-integer")
        if self.n_max < 0 or int(self.n_max) != self.n_max:
            raise ValueError("n_max must be a non-negative integer")

    @classmethod
    def for_spins(cls, n_spins: int, n_max: int) -> "DickeFockBasis":
        return cls(0.5 * n_spins, n_max)

    @property
    def n_spins(self) -> int:
        return int(round(2 * self.spin))

    @property
    def m_values(self) -> np.ndarray:
        return -self.spin + np.arange(self.n_spins + 1)

    @property
    def n_fock(self) -> int:
        return self.n_max + 1

    @property
    def dimension(self) -> int:
        return (self.n_spins + 1) * self.n_fock

    def index(self, m: float, n: int) -> int:
        k = int(round(m + self.spin))
        if not 0 <= k <= self.n_spins or not 0 <= n <= self.n_max:
            raise IndexError(f"(M={m}, n={n}) outside the basis")
        return k * self.n_fock + n

    # single-subsystem operators lifted to the product space
    def _spin_op(self, op):
        return sp.kron(op, sp.identity(self.n_fock), format="csr")

    def _field_op(self, op):
        return sp.kron(sp.identity(self.n_spins + 1), op, format="csr")

    def annihilation(self) -> sp.csr_matrix:
        a = sp.diags(np.sqrt(np.arange(1, self.n_fock)), 1, dtype=complex)
        return self._field_op(a)

    def s_minus(self) -> sp.csr_matrix:
        m = self.m_values
        s = self.spin
        # <M-1|S-|M> = sqrt(S(S+1) - M(M-1))
        elems = np.sqrt(s * (s + 1) - m[1:] * (m[1:] - 1))
        return self._spin_op(sp.diags(elems, 1, dtype=complex))

    def s_z(self) -> sp.csr_matrix:
        return self._spin_op(sp.diags(self.m_values.astype(complex), 0))

    def photon_number(self) -> sp.csr_matrix:
        return self._field_op(sp.diags(np.arange(self.n_fock, dtype=complex), 0))

    def boundary_projector(self) -> np.ndarray:
        """Boolean mask of basis states with n = n_max."""
        mask = np.zeros(self.dimension, dtype=bool)
        mask[self.n_max::self.n_fock] = True
        return mask


@dataclass
class QuantumState:
    """Pure state (``vector``) or density matrix (``rho``) at time ``time``."""

    basis: DickeFockBasis
    vector: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    time: float = 0.0

    def __post_init__(self):
        if (self.vector is None) == (self.rho is None):
            raise ValueError("give exactly one of vector or rho")
        d = self.basis.dimension
        if self.vector is not None:
            self.vector = np.asarray(self.vector, dtype=complex)
            if self.vector.shape != (d,):
                raise ValueError(f"vector must have shape ({d},)")
        else:
            self.rho = np.asarray(self.rho, dtype=complex)
            if self.rho.shape != (d, d):
                raise ValueError(f"rho must have shape ({d}, {d})")

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    def density_matrix(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        return np.outer(self.vector, self.vector.conj())

    def norm(self) -> float:
        """Norm squared of the vector, or trace of rho."""
        if self.is_pure:
            return float(np.vdot(self.vector, self.vector).real)
        return float(np.trace(self.rho).real)

    def expect(self, op) -> complex:
        if self.is_pure:
            return complex(np.vdot(self.vector, op @ self.vector))
        return complex((op @ self.rho).trace())

    @classmethod
    def product(cls, basis: DickeFockBasis, spin_amps, field_amps) -> "QuantumState":
        return cls(basis, vector=np.kron(np.asarray(spin_amps, dtype=complex),
                                         np.asarray(field_amps, dtype=complex)))

    @classmethod
    def dicke_fock(cls, basis: DickeFockBasis, m: float, n: int = 0) -> "QuantumState":
        v = np.zeros(basis.dimension, dtype=complex)
        v[basis.index(m, n)] = 1.0
        return cls(basis, vector=v)

    @classmethod
    def ground(cls, basis: DickeFockBasis) -> "QuantumState":
        return cls.dicke_fock(basis, -basis.spin, 0)


def spin_coherent_amplitudes(spin: float, theta: float, phi: float = 0.0) -> np.ndarray:
    """Amplitudes over M = -S..S of the spin rotated by theta from |S,-S>.

    The state has <S-> = S sin(theta) e^{i phi} and <Sz> = -S cos(theta).
    """
    n = int(round(2 * spin))
    k = np.arange(n + 1)  # k = S + M
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    mag = np.exp(0.5 * log_binom) * np.power(abs(c), n - k) * np.power(abs(s), k)
    sign = np.sign(c) ** (n - k) * np.sign(s) ** k if c and s else 1.0
    return mag * sign * np.exp(1j * k * phi)


def coherent_field_amplitudes(alpha: complex, n_max: int) -> np.ndarray:
    """Fock amplitudes of |alpha>, truncated at n_max (not renormalized)."""
    n = np.arange(n_max + 1)
    if alpha == 0:
        out = np.zeros(n_max + 1, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent_product_state(basis: DickeFockBasis, theta: float = 0.0, phi: float = 0.0,
                           alpha: complex = 0j) -> QuantumState:
    return QuantumState.product(basis, spin_coherent_amplitudes(basis.spin, theta, phi),
                                coherent_field_amplitudes(alpha, basis.n_max))


def build_tc_generator(basis: DickeFockBasis, params: PhysicalParams,
                       drive_amplitude: complex = 0.0) -> sp.csr_matrix:
    """Rotating-frame Hamiltonian (units of hbar, rad/s).

    H = ds Sz + dc a'a + g (a' S- + a S+) + V a' + V* a
    """
    a = basis.annihilation()
    sm = basis.s_minus()
    ad, spl = a.getH(), sm.getH()
    h = (params.delta_s * basis.s_z() + params.delta_c * basis.photon_number()
         + params.coupling_g * (ad @ sm + a @ spl))
    if drive_amplitude:
        v = complex(drive_amplitude)
        h = h + v * ad + v.conjugate() * a
    h = sp.csr_matrix(h)
    h.eliminate_zeros()
    return h


def excitation_number(basis: DickeFockBasis) -> sp.csr_matrix:
    """a'a + Sz + S, conserved by the undriven resonant Hamiltonian."""
    return (basis.photon_number() + basis.s_z()
            + basis.spin * sp.identity(basis.dimension, format="csr"))


def lindblad_generator(h, collapse) -> sp.csr_matrix:
    """Superoperator acting on column-stacked density matrices."""
    d = h.shape[0]
    eye = sp.identity(d, format="csr")
    gen = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for c in collapse:
        cdc = c.getH() @ c
        gen = gen + sp.kron(c.conj(), c) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
    return sp.csr_matrix(gen)


@dataclass
class ExactTrace:
    t: np.ndarray
    a: np.ndarray
    s_minus: np.ndarray
    s_z: np.ndarray
    n: np.ndarray
    spsm: np.ndarray
    norm: np.ndarray
    excitation: np.ndarray
    emission_rate: np.ndarray
    boundary_population: float
    metadata: dict = field(default_factory=dict)

    def semiclassical(self, i: int) -> SemiclassicalState:
        return SemiclassicalState(complex(self.a[i]), complex(self.s_minus[i]),
                                  float(self.s_z[i]))


def _propagate(gen, x0, t_grid):
    """exp(gen (t - t0)) x0 on t_grid; uses one Krylov sweep on uniform grids."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 1:
        return x0[None, :]
    steps = np.diff(t_grid)
    if np.any(steps <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        return expm_multiply(gen, x0, start=0.0, stop=t_grid[-1] - t_grid[0],
                             num=t_grid.size, endpoint=True)
    out = np.empty((t_grid.size, x0.size), dtype=complex)
    out[0] = x0
    for k, dt in enumerate(steps):
        out[k + 1] = expm_multiply(gen * dt, out[k])
    return out


def evolve_exact(state0: QuantumState, generator, kappa: float = 0.0, gamma: float = 0.0,
                 t_grid=None, dimension_cap: int = DEFAULT_DIMENSION_CAP,
                 cutoff_tolerance: float = CUTOFF_TOLERANCE,
                 coupling_g: Optional[float] = None) -> ExactTrace:
    """Expectation values on ``t_grid`` (seconds, starting at the state's time).

    ``generator`` is the Hamiltonian from :func:`build_tc_generator`.
    ``coupling_g`` enables the exact emission rate -d<Sz>/dt (zero otherwise).
    """
    basis = state0.basis
    d = basis.dimension
    t_grid = np.asarray(t_grid, dtype=float)
    open_system = kappa > 0 or gamma > 0 or not state0.is_pure
    entries = d * d if open_system else d
    if entries > dimension_cap:
        raise OracleError(f"{entries} state entries exceed the cap of {dimension_cap}")
    a, sm, sz, num = basis.annihilation(), basis.s_minus(), basis.s_z(), basis.photon_number()
    spsm = sm.getH() @ sm
    exc = excitation_number(basis)
    ops = {"a": a, "s_minus": sm, "s_z": sz, "n": num, "spsm": spsm, "excitation": exc}
    if coupling_g:
        # -d<Sz>/dt = -i g <a' S- - a S+>, exact for any dissipator here
        ops["emission"] = -1j * coupling_g * (a.getH() @ sm - a @ sm.getH())
    boundary = basis.boundary_projector()
    h = sp.csr_matrix(generator)
    if open_system:
        collapse = []
        if kappa > 0:
            collapse.append(math.sqrt(2 * kappa) * a)
        if gamma > 0:
            collapse.append(math.sqrt(2 * gamma) * sz)
        gen = lindblad_generator(h, collapse)
        x0 = state0.density_matrix().reshape(-1, order="F")
    else:
        gen = sp.csr_matrix(-1j * h)
        x0 = state0.vector
    xs = _propagate(gen, x0, t_grid - t_grid[0])
    res = {k: np.empty(t_grid.size, dtype=complex) for k in ops}
    norm = np.empty(t_grid.size)
    bpop = 0.0
    for i, x in enumerate(xs):
        if open_system:
            rho = x.reshape(d, d, order="F")
            norm[i] = np.trace(rho).real
            bpop = max(bpop, float(np.diag(rho).real[boundary].sum()))
            for k, op in ops.items():
                res[k][i] = (op @ rho).trace()
        else:
            norm[i] = np.vdot(x, x).real
            bpop = max(bpop, float(np.sum(np.abs(x[boundary]) ** 2)))
            for k, op in ops.items():
                res[k][i] = np.vdot(x, op @ x)
    if bpop > cutoff_tolerance and not _truncation_exact(basis, h, exc, x0, open_system):
        raise CutoffError(f"Fock cutoff n_max={basis.n_max} too small: boundary population "
                          f"reached {bpop:.3g}", bpop)
    emission = res["emission"].real if "emission" in res else np.zeros(t_grid.size)
    return ExactTrace(t_grid, res["a"], res["s_minus"], res["s_z"].real, res["n"].real,
                      res["spsm"].real, norm, res["excitation"].real, emission, bpop,
                      {"oracle": True, "open_system": open_system, "dimension": d})


def _truncation_exact(basis, h, exc, x0, open_system) -> bool:
    """True when the cutoff cannot be reached.

    Either H commutes with a'a (photons are never created; losses only remove
    them), or H conserves the excitation number and the initial state holds at
    most n_max excitations.
    """
    num = basis.photon_number()
    field_comm = h @ num - num @ h
    if not field_comm.count_nonzero() or abs(field_comm).max() == 0:
        return True
    comm = h @ exc - exc @ h
    if comm.count_nonzero() and abs(comm).max() > 0:
        return False
    d = basis.dimension
    if open_system:
        pops = np.abs(x0.reshape(d, d, order="F").diagonal())
    else:
        pops = np.abs(x0) ** 2
    occupied = exc.diagonal().real[pops > 0]
    return bool(occupied.size == 0 or occupied.max() <= basis.n_max + 1e-9)


@dataclass(frozen=True)
class DelayStatistics:
    """Emission timing from the fully inverted state.

    peak_time: time of maximum emission rate -d<Sz>/dt.
    mean_time: emission-weighted mean time, int t R dt / int R dt over the grid.
    """

    spin: float
    peak_time: float
    mean_time: float
    emitted_fraction: float
    trace: ExactTrace


def single_spin_purcell_rate(params: PhysicalParams) -> float:
    """Cavity-enhanced decay rate of one spin, 2 g^2 / kappa (bad-cavity limit)."""
    return 2.0 * params.coupling_g ** 2 / params.kappa_total


def exact_delay_statistics(spin: float, params: PhysicalParams, t_grid,
                           n_max: Optional[int] = None,
                           dimension_cap: int = DEFAULT_DIMENSION_CAP) -> DelayStatistics:
    """Superradiant emission from |S, S> (x) |0> under the Lindblad dynamics.

    ``n_max`` defaults to 2S, which is exact: losses never raise the
    excitation number above its initial value.
    """
    n_max = int(round(2 * spin)) if n_max is None else n_max
    basis = DickeFockBasis(spin, n_max)
    h = build_tc_generator(basis, params)
    state = QuantumState.dicke_fock(basis, spin, 0)
    trace = evolve_exact(state, h, params.kappa_total, params.gamma, t_grid,
                         dimension_cap=dimension_cap, coupling_g=params.coupling_g)
    t, r = trace.t, trace.emission_rate
    i = int(np.argmax(r))
    peak = float(t[i])
    if 0 < i < t.size - 1:
        p, _ = parabolic_vertex(-r, i)
        peak = float(t[i] + p * (t[i + 1] - t[i]))
    w = np.clip(r, 0, None)
    mean = float(trapezoid(w * t, t) / trapezoid(w, t))
    emitted = float((trace.s_z[0] - trace.s_z[-1]) / (2 * spin))
    return DelayStatistics(spin, peak, mean, emitted, trace)


def harmonic_delay(n_spins: int, gamma_1: float) -> float:
    """(1/(N Gamma_1)) sum_{k=1}^{N} 1/k."""
    return sum(1.0 / k for k in range(1, n_spins + 1)) / (n_spins * gamma_1)


def second_time_derivative(state: QuantumState, hamiltonian, op) -> float:
    """d^2<op>/dt^2 = -<[H, [H, op]]> for closed evolution at the state's time."""
    h = sp.csr_matrix(hamiltonian)
    inner = h @ op - op @ h
    outer = h @ inner - inner @ h
    return float(-state.expect(outer).real)


@dataclass(frozen=True)
class Comparison:
    """Exact and mean-field traces on a shared grid for one ensemble size.

    ``deviation`` is |<Sz>_exact - s_z| / (N/2) at the first maximum of the
    mean-field photon number (the first exchange extremum).
    """

    n_spins: int
    semiclassical: "sc.SimulationTrace"
    exact: "sc.SimulationTrace"
    deviation: float
    extremum_time: float


def compare_with_semiclassical(n_spins: int, theta: float, collective_g: float,
                               periods: float = 1.5, samples: int = 400,
                               n_max: Optional[int] = None) -> Comparison:
    """Lossless resonant evolution of a tipped spin and empty cavity at fixed G.

    ``n_max`` defaults to N, which holds every excitation of the initial state.
    """
    n = int(n_spins)
    params = PhysicalParams(0.0, 0.0, collective_g / math.sqrt(n), float(n), 0.0, 0.0, 0.0, 0.0)
    t_end = periods * 2 * math.pi / collective_g
    init = SemiclassicalState.on_sphere(n, theta)
    none = sc.DriveEnvelope.none()
    trace = sc.run_fid(sc.FidExperiment(params, none, t_end, t_end / samples, 0.0, init))
    basis = DickeFockBasis.for_spins(n, n if n_max is None else n_max)
    q = evolve_exact(coherent_product_state(basis, theta), build_tc_generator(basis, params),
                     0.0, 0.0, trace.t)
    idx = local_maxima(trace.n)
    i = int(idx[0]) if idx.size else trace.t.size - 1
    dev = abs(q.s_z[i] - trace.s_z[i]) / (n / 2)
    qtrace = sc.SimulationTrace(q.t, q.a, q.s_minus, q.s_z, params, none, 0.0,
                                metadata={"oracle": True})
    return Comparison(n, trace, qtrace, float(dev), float(trace.t[i]))
