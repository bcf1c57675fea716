"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``HYPSTAB_BACKEND=python`` to force the numpy fallback.  The choice is
made once at import.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

HAVE_COMPILED = _kernels_cy is not None

if os.environ.get("HYPSTAB_BACKEND", "").lower() == "python" or not HAVE_COMPILED:
    _active = _kernels_py
else:
    _active = _kernels_cy


def kernels():
    """The active kernel module."""
    return _active


def backend_name():
    return "compiled" if _active is _kernels_cy else "python"
