"""Scoring kernel backends.

The compiled Cython backend is used when available; a pure-numpy fallback is
always present. Selection happens once at import and can be forced with
``STYLECOMPAT_KERNEL=fast|numpy`` (``auto`` by default).
"""
from __future__ import annotations

import os

from . import _numpy as _numpy_backend

_PREF = os.environ.get("STYLECOMPAT_KERNEL", "auto").lower()
if _PREF not in ("auto", "fast", "numpy"):
    raise ValueError(f"STYLECOMPAT_KERNEL must be auto|fast|numpy, not {_PREF!r}")

BACKEND = "numpy"
_impl = _numpy_backend
if _PREF in ("auto", "fast"):
    try:
        from . import _fast as _fast_backend

        _impl = _fast_backend
        BACKEND = "fast"
    except ImportError:
        if _PREF == "fast":
            raise
        _fast_backend = None
else:
    try:
        from . import _fast as _fast_backend
    except ImportError:
        _fast_backend = None

cond_dist_matrix = _impl.cond_dist_matrix
pair_dists = _impl.pair_dists


def available_backends() -> dict[str, object]:
    backends = {"numpy": _numpy_backend}
    if _fast_backend is not None:
        backends["fast"] = _fast_backend
    return backends


def get_backend(name: str):
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available") from None
