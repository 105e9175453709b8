"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``PVQML_PURE_PYTHON=1`` to force the numpy kernels.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

KERNELS = {"numpy": _pykernels}
if _ckernels is not None:
    KERNELS["cython"] = _ckernels

if _ckernels is not None and not os.environ.get("PVQML_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "numpy"

kernels = KERNELS[BACKEND]


def get_kernels(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return kernels
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(KERNELS)}") from None
