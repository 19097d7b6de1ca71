"""Select the compiled kernel module when available.

Set ``MVSIM_BACKEND=python`` to force the NumPy fallback, or
``MVSIM_BACKEND=cython`` to make a missing extension an import error.
"""

from __future__ import annotations

import os

from mvsim import _kernels_py

_choice = os.environ.get("MVSIM_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _kernels_py
else:
    try:
        from mvsim import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _kernels_py

BACKEND: str = kernels.BACKEND


def get_kernels(name: str | None = None):
    """Return a kernel module by name (``"python"``, ``"cython"``) or the default."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        from mvsim import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
