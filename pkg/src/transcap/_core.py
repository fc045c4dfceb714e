"""Backend selection for the hot kernels.

The compiled extension is used when importable; ``TRANSCAP_PURE=1`` forces
the pure-Python twin (handy for debugging and for the backend benchmark).
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("TRANSCAP_PURE"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

minplus_convolve = _impl.minplus_convolve
minplus_compose = _impl.minplus_compose
slotted_run = _impl.slotted_run
csma_run = _impl.csma_run


def backends():
    """Map of available backend names to kernel modules."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
