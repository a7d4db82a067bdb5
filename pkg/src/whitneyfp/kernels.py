"""Kernel selection: compiled simplex loop if built, numpy fallback otherwise.

Set ``WHITNEYFP_PURE_PYTHON=1`` to force the fallback at import time.
"""
from __future__ import annotations

import os

from . import _simplex_py

try:
    if os.environ.get("WHITNEYFP_PURE_PYTHON"):
        raise ImportError("pure python forced")
    from . import _simplex_core
except ImportError:
    _simplex_core = None

BACKEND = "cython" if _simplex_core is not None else "python"

_impl = _simplex_core if _simplex_core is not None else _simplex_py
simplex_loop = _impl.simplex_loop
pivot = _impl.pivot


def use_backend(name: str) -> None:
    """Switch the active kernels (``"cython"`` or ``"python"``); used by benchmarks."""
    global simplex_loop, pivot, BACKEND
    if name == "cython":
        if _simplex_core is None:
            raise RuntimeError("compiled extension is not built")
        impl = _simplex_core
    elif name == "python":
        impl = _simplex_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    simplex_loop, pivot, BACKEND = impl.simplex_loop, impl.pivot, name
