"""Backend selection for the Maxwell-Bloch propagation kernel.

The compiled extension is used when importable. Setting
``PSEUDOSPIN_PURE_PYTHON=1`` forces the pure-Python implementation.
"""
import os

from . import _mb_fallback
from .integrator import IntegrationError

_compiled = None
if os.environ.get("PSEUDOSPIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _mb_kernel as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def evolve(y0, coeffs, breaks, drive_re, drive_im, t_eval, rtol, atol, max_step,
           backend=None):
    """Dispatch to the selected backend; see ``_mb_fallback.evolve``."""
    name = backend or BACKEND
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        try:
            return _compiled.evolve(y0, coeffs, breaks, drive_re, drive_im, t_eval,
                                    rtol, atol, max_step)
        except _compiled.IntegrationFailure as exc:
            raise IntegrationError(str(exc), exc.t_last) from None
    if name == "python":
        return _mb_fallback.evolve(y0, coeffs, breaks, drive_re, drive_im, t_eval,
                                   rtol, atol, max_step)
    raise ValueError(f"unknown backend {name!r}")
