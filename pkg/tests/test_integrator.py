import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pseudospin import core, semiclassical as sc
from pseudospin.integrator import (IntegrationError, IntegratorConfig, OdeProblem,
                                   complex_to_real, integrate, real_to_complex, uniform_grid)


def decay(lam):
    return lambda t, y: -lam * y


def oscillator(omega):
    return lambda t, y: np.array([y[1], -omega * omega * y[0]])


def test_fast_exponential():
    prob = OdeProblem(decay(1e6), 0.0, 5e-6, np.array([1.0]))
    tr = integrate(prob, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-14, output_dt=1e-7))
    assert tr.y[-1, 0] == pytest.approx(math.exp(-5), rel=1e-9)
    assert tr.y[-1, 0] == pytest.approx(6.7379e-3, rel=1e-4)
    np.testing.assert_allclose(tr.y[:, 0], np.exp(-1e6 * tr.t), rtol=1e-8)


def test_oscillator_energy_drift():
    w = 2 * math.pi * 1e6
    prob = OdeProblem(oscillator(w), 0.0, 30e-6, np.array([1.0, 0.0]))
    tr = integrate(prob, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-14, output_dt=1e-8))
    energy = tr.y[:, 0] ** 2 + (tr.y[:, 1] / w) ** 2
    assert np.max(np.abs(energy - 1.0)) < 1e-8


def test_lossless_maxwell_bloch_radius(lossless):
    """Radius conservation, cross-checked against a fixed-step RK4 at a 10x finer step."""
    init = core.SemiclassicalState.on_sphere(lossless.n_spins, 1.1, 0.2, a=3e6 - 1e6j)
    trace = sc.run_fid(sc.FidExperiment(lossless, sc.DriveEnvelope.none(), 30e-6, 1e-8, 0.0,
                                        init))
    r = np.hypot(np.abs(trace.s_minus), trace.s_z)
    assert np.max(np.abs(r / r[0] - 1)) < 1e-9

    G, n = lossless.collective_g, lossless.n_spins
    from pseudospin._mb_fallback import mb_rhs_normalized
    y = np.array([init.a.real / math.sqrt(n), init.a.imag / math.sqrt(n),
                  init.s_minus.real / n, init.s_minus.imag / n, init.s_z / n])
    f = lambda v: mb_rhs_normalized(v, G, 0, 0, 0, 0, 0, 0)
    h = 1e-9
    for _ in range(1000):  # 1 us
        k1 = f(y); k2 = f(y + h / 2 * k1); k3 = f(y + h / 2 * k2); k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert trace.s_z[100] / n == pytest.approx(y[4], abs=1e-9)


def test_grid_uniform_and_first_sample_exact():
    y0 = np.array([0.3, -1.7])
    prob = OdeProblem(oscillator(3.0), 0.0, 2.0, y0)
    tr = integrate(prob, IntegratorConfig(output_dt=0.01))
    assert tr.t.size == 201
    assert np.all(np.diff(tr.t) == pytest.approx(0.01, rel=1e-12))
    assert np.array_equal(tr.y[0], y0)
    assert tr.t[-1] == pytest.approx(2.0)


def test_halving_tolerance_does_not_hurt():
    w = 5.0
    prob = OdeProblem(oscillator(w), 0.0, 10.0, np.array([1.0, 0.0]))
    exact = math.cos(w * 10.0)
    errs = []
    for rtol in (1e-6, 5e-7, 2.5e-7, 1.25e-7):
        tr = integrate(prob, IntegratorConfig(rel_tol=rtol, abs_tol=rtol * 1e-3))
        errs.append(abs(tr.final[0] - exact))
    assert all(b <= a * 1.05 for a, b in zip(errs, errs[1:]))


def test_restart_from_midpoint():
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, output_dt=0.5)
    prob = OdeProblem(oscillator(2.0), 0.0, 10.0, np.array([1.0, 0.5]))
    full = integrate(prob, cfg)
    mid = full.y[10]
    half = integrate(OdeProblem(oscillator(2.0), 5.0, 10.0, mid), cfg)
    assert np.max(np.abs(half.final - full.final)) < 10 * 1e-10 * np.max(np.abs(full.final)) + 1e-12


def test_nonfinite_rhs():
    prob = OdeProblem(lambda t, y: y * np.inf, 0.0, 1.0, np.array([1.0]))
    with pytest.raises(IntegrationError) as info:
        integrate(prob, IntegratorConfig())
    assert info.value.t_last == 0.0


def test_step_underflow_reports_time():
    # finite-time blow-up at t = 1
    prob = OdeProblem(lambda t, y: y * y, 0.0, 2.0, np.array([1.0]))
    with pytest.raises(IntegrationError) as info:
        integrate(prob, IntegratorConfig())
    assert 0.9 < info.value.t_last <= 1.0


def test_config_and_problem_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0)
    with pytest.raises(ValueError):
        IntegratorConfig(output_dt=-1)
    with pytest.raises(ValueError):
        OdeProblem(decay(1.0), 1.0, 1.0, np.array([1.0]))
    assert OdeProblem(decay(1.0), 0.0, 1.0, np.zeros(4)).dimension == 4


def test_complex_interleaving():
    z = np.array([1 + 2j, -3.5j, 4.0])
    x = complex_to_real(z)
    assert list(x[:2]) == [1.0, 2.0]
    assert np.array_equal(real_to_complex(x), z)


def test_uniform_grid_includes_end():
    g = uniform_grid(0.0, 30e-6, 1e-8)
    assert g.size == 3001
    assert g[-1] == pytest.approx(30e-6)


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(1e-2, 1e4), t_end=st.floats(1e-3, 5.0))
def test_linear_decay_property(lam, t_end):
    t_end = min(t_end, 20.0 / lam)
    prob = OdeProblem(decay(lam), 0.0, t_end, np.array([2.0]))
    tr = integrate(prob, IntegratorConfig(rel_tol=1e-9, abs_tol=1e-15))
    assert tr.final[0] == pytest.approx(2.0 * math.exp(-lam * t_end), rel=1e-7)
