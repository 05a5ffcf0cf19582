"""Kernel backend selection.

The hot loops of tree growing live in two interchangeable modules:
``trees._kernels_numba`` (``@njit`` compiled) and ``trees._kernels_numpy``
(vectorised numpy, no compiler needed).  ``ENSEMBLEGUARD_BACKEND`` picks one
at import time; ``numba`` is the default whenever numba imports cleanly.
``NUMBA_DISABLE_JIT`` is honoured too and forces the numpy path.
"""
from __future__ import annotations

import importlib
import os
from types import ModuleType

BACKENDS = ("numba", "numpy")


def _numba_available() -> bool:
    if os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("", "0"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def requested_backend() -> str:
    name = os.environ.get("ENSEMBLEGUARD_BACKEND", "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(
            f"ENSEMBLEGUARD_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not _numba_available():
        return "numpy"
    return name


def load_kernels(name: str | None = None) -> ModuleType:
    name = requested_backend() if name is None else name
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    return importlib.import_module(f"ensembleguard.trees._kernels_{name}")


BACKEND = requested_backend()
