"""Select the path-generation backend at import time.

The compiled extension is used when it was built; ``LLTLAB_BACKEND=python``
forces the numpy fallback.  Both produce identical arrays for identical
arguments, so the choice only affects speed.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available() -> list[str]:
    return sorted(_BACKENDS)


def get(name: str | None = None) -> ModuleType:
    if name is None:
        return kernels
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None


def _default() -> str:
    wanted = os.environ.get("LLTLAB_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in _BACKENDS:
            raise ImportError(f"LLTLAB_BACKEND={wanted!r} requested but not available")
        return wanted
    return "cython" if "cython" in _BACKENDS else "python"


NAME = _default()
kernels = _BACKENDS[NAME]
