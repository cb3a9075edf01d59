"""Kernel backend selection.

The hot loops (PCAP scanning, header decoding, filter matching, block
serialization) exist twice: numba-jitted loops in ``_kernels_numba`` and
vectorized pure-numpy equivalents in ``_kernels_numpy``. Both expose the
same functions with identical semantics.

Selection is controlled by the ``PCAPML_BACKEND`` environment variable:
``auto`` (default: numba when importable, else numpy), ``numba``, or
``numpy``. ``benchmarks/bench_backends.py`` compares the two.
"""

from __future__ import annotations

import os

ENV_VAR = "PCAPML_BACKEND"

_modules: dict[str, object] = {}
_numba_error: Exception | None = None


def _load(name: str):
    global _numba_error
    mod = _modules.get(name)
    if mod is not None:
        return mod
    if name == "numba":
        try:
            from . import _kernels_numba as mod
        except ImportError as exc:
            _numba_error = exc
            raise
    elif name == "numpy":
        from . import _kernels_numpy as mod
    else:
        raise ValueError(f"unknown backend {name!r} (use 'numba', 'numpy', or 'auto')")
    _modules[name] = mod
    return mod


def backend_name(requested: str | None = None) -> str:
    """Resolve the effective backend name without importing kernels."""
    name = requested or os.environ.get(ENV_VAR, "auto").strip().lower() or "auto"
    if name == "auto":
        try:
            _load("numba")
            return "numba"
        except ImportError:
            return "numpy"
    return name


def kernels(requested: str | None = None):
    """Return the active kernel module."""
    name = backend_name(requested)
    try:
        return _load(name)
    except ImportError as exc:
        raise RuntimeError(
            f"backend {name!r} requested via {ENV_VAR} but numba is not importable"
        ) from exc


def available_backends() -> list[str]:
    names = []
    try:
        _load("numba")
        names.append("numba")
    except ImportError:
        pass
    names.append("numpy")
    return names
