"""Numerical kernels with a compiled fast path.

The compiled extension (``_ckernels``) implements the hot per-element and
per-edge quadrature loops; the numpy backend is the always-available
fallback.  Selection happens once at import time and can be forced with
``EVAFEM_KERNELS=python`` or ``EVAFEM_KERNELS=compiled``.
"""

import os

from evafem.kernels import numpy_backend

# reaction nonlinearity codes shared by both backends
LINEAR = 0   # phi(u) = c*u
CUBIC = 1    # phi(u) = u^3
ABS_QUADRATIC = 2  # phi(u) = |u|*u
EXPM1 = 3    # phi(u) = exp(u) - 1

_forced = os.environ.get("EVAFEM_KERNELS", "").strip().lower()

if _forced == "python":
    _impl = numpy_backend
    BACKEND = "python"
elif _forced == "compiled":
    from evafem.kernels import _ckernels as _impl  # hard failure when forced

    BACKEND = "compiled"
else:
    try:
        from evafem.kernels import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "python"

stiffness_entries = _impl.stiffness_entries
reaction_energy = _impl.reaction_energy
reaction_gradient = _impl.reaction_gradient
reaction_moments = _impl.reaction_moments
edge_patch_entries = _impl.edge_patch_entries
