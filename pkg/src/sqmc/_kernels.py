"""Select the kernel backend at import time.

The compiled ``_core`` extension is preferred. Setting the environment
variable ``SQMC_PURE_PYTHON=1`` forces the numpy fallback, as does a missing
extension.
"""

import os
import warnings

from sqmc import _pykernels

try:
    from sqmc import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = {"python": _pykernels}
if _core is not None:
    BACKENDS["cython"] = _core

_active = _pykernels
if _core is not None and os.environ.get("SQMC_PURE_PYTHON", "") in ("", "0"):
    _active = _core


def backend():
    """The kernel module currently in use."""
    return _active


def backend_name():
    return "cython" if _active is _core and _core is not None else "python"


def set_backend(name):
    """Switch backends (``"cython"`` or ``"python"``); returns the previous name."""
    global _active
    previous = backend_name()
    if name not in BACKENDS:
        if name == "cython":
            warnings.warn("compiled extension not available; staying on python")
            return previous
        raise ValueError(f"unknown backend {name!r}")
    _active = BACKENDS[name]
    return previous
