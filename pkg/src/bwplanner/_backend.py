"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``BW_PLANNER_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("BW_PLANNER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

takacs_f = _impl.takacs_f
simulate_core = _impl.simulate_core


def kernels(name=None):
    """Return the kernel module by name (``"cython"`` or ``"python"``)."""
    if name in (None, BACKEND):
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
