"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the NumPy
fallback is used.  ``TETMF_BACKEND`` (auto | compiled | python) forces the
choice, and ``get_backend`` hands out a specific implementation for
side-by-side comparison.
"""

from __future__ import annotations

import os

from . import numpy_backend

STAGE_REFERENCE = numpy_backend.STAGE_REFERENCE
STAGE_DATA = numpy_backend.STAGE_DATA
STAGE_MM = numpy_backend.STAGE_MM
STAGE_SCHED = numpy_backend.STAGE_SCHED

STAGE_CODES = {"ref": STAGE_REFERENCE, "data": STAGE_DATA, "mm": STAGE_MM, "sched": STAGE_SCHED}

_compiled = None
try:
    from . import _kernels as _compiled  # noqa: F401
except ImportError:
    _compiled = None


def get_backend(name: str = "auto"):
    """Return the kernel module for ``name`` in {auto, compiled, python}."""
    if name == "python":
        return numpy_backend
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel extension is not available")
        return _compiled
    if name == "auto":
        return _compiled if _compiled is not None else numpy_backend
    raise ValueError(f"unknown backend {name!r}")


active = get_backend(os.environ.get("TETMF_BACKEND", "auto"))

COMPILED_AVAILABLE = _compiled is not None


def cell_kernel(E, U, stage=STAGE_MM, d_action=None, backend=None):
    """result = E^T @ D(E @ U) with a caller-supplied quadrature action."""
    k = backend or active
    V = k.interp(E, U, stage)
    if d_action is not None:
        V = d_action(V)
    return k.interp_t(E, V, stage)
