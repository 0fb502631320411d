"""Select the compiled oracle kernels when available.

Set ``DELAYED_IMPACT_PURE_PYTHON=1`` to force the NumPy fallback.
"""
import os

from . import _kernels_py

if os.environ.get("DELAYED_IMPACT_PURE_PYTHON", "") not in ("", "0"):
    kernels, BACKEND = _kernels_py, "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "compiled"
    except ImportError:
        kernels, BACKEND = _kernels_py, "python"


def get_kernels(name=None):
    """Kernel module by name (``"compiled"``, ``"python"`` or None for the default)."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
