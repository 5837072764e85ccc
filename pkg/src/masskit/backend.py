"""Kernel backend selection.

The curvature contraction kernels exist twice: a compiled Cython extension
(``masskit._kernels_cy``) and a pure numpy fallback (``masskit._kernels_np``).
The compiled backend is preferred when importable; ``MASSKIT_BACKEND`` forces
the choice (values: ``auto``, ``cython``, ``python``).
"""
from __future__ import annotations

import os

from . import _kernels_np

_ACTIVE = None


def get_kernels(name=None):
    """Return the kernel module for `name` (default: MASSKIT_BACKEND or auto)."""
    if name is None:
        name = os.environ.get("MASSKIT_BACKEND", "auto")
    if name not in ("auto", "cython", "python"):
        raise ValueError("unknown backend %r (use auto, cython, or python)" % name)
    if name == "python":
        return _kernels_np
    try:
        from . import _kernels_cy
        return _kernels_cy
    except ImportError:
        if name == "cython":
            raise
        return _kernels_np


def kernels():
    """Process-wide active kernel module (resolved once)."""
    global _ACTIVE
    if _ACTIVE is None:
        _ACTIVE = get_kernels()
    return _ACTIVE


def backend_name():
    return kernels().BACKEND
