"""Select the compiled block kernel, or the pure-Python fallback.

Set ``DARKMODES_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("DARKMODES_PURE_PYTHON"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"


def get_kernels(name=None):
    """Return the kernel module for ``name`` ("compiled", "python", or None for the default)."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels  # raises ImportError if not built
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
