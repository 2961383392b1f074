"""Pure-Python Maxwell-Bloch propagation (used when the extension is absent).

State layout, normalized by the spin number N::

    y = [Re a, Im a, Re s, Im s, z],  a = <a>/sqrt(N), s = <S->/N, z = <Sz>/N

coeffs = (G, kappa, gamma, delta_c, delta_s) with G = g sqrt(N).
The drive is piecewise constant: piece k spans [breaks[k], breaks[k+1]) with
normalized complex amplitude drive_re[k] + 1j*drive_im[k].
"""
import numpy as np

from .integrator import IntegratorConfig, OdeProblem, integrate


def mb_rhs_normalized(y, G, kappa, gamma, dc, ds, vr, vi):
    ar, ai, sr, si, z = y
    return np.array([
        -kappa * ar + dc * ai + G * si + vi,
        -kappa * ai - dc * ar - G * sr - vr,
        -gamma * sr + ds * si - 2.0 * G * z * ai,
        -gamma * si - ds * sr + 2.0 * G * z * ar,
        -2.0 * G * (ar * si - ai * sr),
    ])


def evolve(y0, coeffs, breaks, drive_re, drive_im, t_eval, rtol, atol, max_step):
    """Propagate across every drive piece; returns (samples, final_state, n_steps)."""
    G, kappa, gamma, dc, ds = coeffs
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.empty((t_eval.size, 5))
    y = np.asarray(y0, dtype=float).copy()
    cfg = IntegratorConfig(rel_tol=rtol, abs_tol=atol, max_step=max_step)
    n_steps = 0
    n_pieces = len(breaks) - 1
    for k in range(n_pieces):
        t0, t1 = breaks[k], breaks[k + 1]
        last = k == n_pieces - 1
        sel = (t_eval >= t0) & ((t_eval <= t1) if last else (t_eval < t1))
        vr, vi = drive_re[k], drive_im[k]

        def rhs(t, yy, vr=vr, vi=vi):
            return mb_rhs_normalized(yy, G, kappa, gamma, dc, ds, vr, vi)

        traj = integrate(OdeProblem(rhs, t0, t1, y), cfg, t_eval=t_eval[sel])
        out[sel] = traj.y
        y = traj.final
        n_steps += traj.n_steps
    return out, y, n_steps
