"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``RANKCOLLIDE_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

KERNELS = {"python": _kernels_py.run_batch}
if _compiled is not None:
    KERNELS["compiled"] = _compiled.run_batch

_forced = os.environ.get("RANKCOLLIDE_BACKEND", "").strip().lower()
if _forced and _forced not in ("auto", *KERNELS):
    raise ImportError(f"RANKCOLLIDE_BACKEND={_forced!r} is not available; have {sorted(KERNELS)}")
DEFAULT_BACKEND = _forced if _forced in KERNELS else ("compiled" if _compiled else "python")


def get_kernel(name: str | None = None):
    name = DEFAULT_BACKEND if name in (None, "auto") else name
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available; have {sorted(KERNELS)}") from None
