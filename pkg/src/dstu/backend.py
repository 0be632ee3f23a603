"""Kernel backend selection.

Hot numeric kernels (convolution, box filtering, resizing, scatter-add,
erf) exist twice: a numba-jitted implementation and a pure-numpy one with
identical signatures.  The active backend is chosen once from the
DSTU_BACKEND environment variable ("numba" or "numpy"); unset defaults to
numba when it imports, numpy otherwise.  `set_backend` overrides at
runtime (used by tests and the kernel benchmark).
"""

from __future__ import annotations

import os

ENV_VAR = "DSTU_BACKEND"

_active = None
_active_name = ""


def _load(name: str):
    if name == "numpy":
        from . import kernels_numpy

        return kernels_numpy
    if name == "numba":
        from . import kernels_numba

        return kernels_numba
    raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")


def set_backend(name: str) -> None:
    global _active, _active_name
    _active = _load(name)
    _active_name = name


def _resolve_default() -> str:
    requested = os.environ.get(ENV_VAR, "").strip().lower()
    if requested:
        return requested
    try:
        import numba  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


def kernels():
    """The active kernel module."""
    if _active is None:
        set_backend(_resolve_default())
    return _active


def backend_name() -> str:
    if _active is None:
        set_backend(_resolve_default())
    return _active_name
