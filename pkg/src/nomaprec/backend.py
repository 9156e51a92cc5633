"""Iteration-kernel backend selection.

The compiled extension (`nomaprec._core`) is preferred when importable; the
pure-numpy kernel is the fallback. Override with NOMAPREC_BACKEND=python or
=compiled, or programmatically via `select_backend`.
"""

import os
from . import _kernels as _py

try:
    from . import _core as _compiled
except ImportError:         # extension not built; pure path only
    _compiled = None

_FORCED = None


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def select_backend(name):
    """Force a backend ('python' | 'compiled' | None to restore auto)."""
    global _FORCED
    if name not in (None, "python", "compiled"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _compiled is None:
        raise RuntimeError("compiled backend requested but extension is not built")
    _FORCED = name


def active_backend():
    name = _FORCED or os.environ.get("NOMAPREC_BACKEND", "auto")
    if name == "auto":
        return "compiled" if _compiled is not None else "python"
    if name == "compiled" and _compiled is None:
        raise RuntimeError("NOMAPREC_BACKEND=compiled but extension is not built")
    return name


def get_step(backend=None):
    """Return the iteration-step callable for the requested backend."""
    name = backend or active_backend()
    if name == "python":
        return _py.step
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled backend is not available")
        return _compiled.step
    raise ValueError(f"unknown backend {name!r}")
