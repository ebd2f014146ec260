"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
implementation takes over. Setting ``ALARMTAXIS_BACKEND=python`` forces the
fallback.
"""

from __future__ import annotations

import importlib
import os

_MODULES = {"cython": "alarmtaxis._ckernels", "python": "alarmtaxis._pykernels"}


def load_backend(name: str):
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_MODULES)}")
    return importlib.import_module(_MODULES[name])


def available_backends() -> list[str]:
    names = []
    for name in _MODULES:
        try:
            load_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    requested = os.environ.get("ALARMTAXIS_BACKEND", "").strip().lower()
    if requested:
        return requested, load_backend(requested)
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _impl = _select()
advance = _impl.advance
rhs = _impl.rhs


def set_backend(name: str) -> str:
    """Switch the active backend at runtime; returns the previous name."""
    global BACKEND, _impl, advance, rhs
    impl = load_backend(name)
    previous = BACKEND
    BACKEND, _impl, advance, rhs = name, impl, impl.advance, impl.rhs
    return previous
