"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy ``_fallback`` module. Set ``SILTOPO_BACKEND=python`` to force the
fallback (``cython`` to require the extension).
"""
from __future__ import annotations

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

_requested = os.environ.get("SILTOPO_BACKEND", "").strip().lower()
if _requested == "python":
    BACKEND = "python"
elif _requested == "cython":
    if _compiled is None:
        raise ImportError("SILTOPO_BACKEND=cython but siltopo._kernels is not built")
    BACKEND = "cython"
else:
    BACKEND = "cython" if _compiled is not None else "python"

kernels = BACKENDS[BACKEND]
