"""Backend selection for the subcycling kernel.

The compiled extension is used when it imports; setting
``SEAICE_LKF_BACKEND=python`` forces the numpy implementation.
"""
from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("SEAICE_LKF_BACKEND", "").lower()

try:
    if _forced == "python":
        raise ImportError("numpy backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py.relax}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled.relax

BACKEND = "compiled" if _compiled is not None else "python"
relax = BACKENDS[BACKEND]


def get(name: str | None = None):
    if name is None:
        return relax
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
