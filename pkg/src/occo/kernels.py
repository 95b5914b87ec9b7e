"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise, or when the
environment variable ``OCCO_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the pure-Python module is used.  Both produce identical results.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels


def _load_compiled() -> ModuleType | None:
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module named ``"cython"`` or ``"python"``."""
    if name is None:
        forced = os.environ.get("OCCO_PURE_PYTHON", "")
        if forced not in ("", "0") or _compiled is None:
            return _pykernels
        return _compiled
    if name == "python":
        return _pykernels
    if name == "cython":
        if _compiled is None:
            raise ImportError("occo._ckernels is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def has_compiled() -> bool:
    return _compiled is not None


_impl = get_backend()
BACKEND = "cython" if _impl is _compiled and _compiled is not None else "python"

delaunay = _impl.delaunay
zbuffer_visibility = _impl.zbuffer_visibility
nearest = _impl.nearest
auction = _impl.auction
