"""Backend selection for the state-update kernel.

The compiled extension is preferred; the pure-NumPy twin is a drop-in
fallback.  Set CHABOCAL_KERNEL=python (or =compiled) to force a backend.
"""

import os

from .errors import ChabocalError

#: implicit-solve iteration cap and relative residual tolerance
NEWTON_MAXIT = 50
NEWTON_TOL = 1e-10
#: maximal recursive step-bisection depth on solver failure
MAX_BISECT = 10

_forced = os.environ.get("CHABOCAL_KERNEL", "").strip().lower()
if _forced not in ("", "compiled", "python"):
    raise ChabocalError(f"CHABOCAL_KERNEL must be 'compiled' or 'python', got {_forced!r}")

if _forced == "python":
    from . import _kernel_py as _impl
else:
    try:
        from . import _kernel as _impl
    except ImportError:
        if _forced == "compiled":
            raise
        from . import _kernel_py as _impl

BACKEND = _impl.BACKEND
step_once = _impl.step_once
integrate_path = _impl.integrate_path
