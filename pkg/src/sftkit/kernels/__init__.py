"""Kernel backend selection.

The compiled Cython sweeps are preferred when present; the numpy reference
implementation is the fallback.  Override with ``SFTKIT_KERNELS=reference``
or ``SFTKIT_KERNELS=compiled`` (the latter raises if the extension is
missing instead of silently falling back).
"""

from __future__ import annotations

import os

_requested = os.environ.get("SFTKIT_KERNELS", "auto")

if _requested not in ("auto", "compiled", "reference"):
    raise RuntimeError(
        f"SFTKIT_KERNELS must be auto/compiled/reference, got {_requested!r}"
    )

if _requested == "reference":
    from . import reference as _impl

    BACKEND = "reference"
else:
    try:
        from . import _sweeps as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        from . import reference as _impl

        BACKEND = "reference"

raster_sweep = _impl.raster_sweep
border_distance_sweep = _impl.border_distance_sweep
FAR_DISTANCE = 1e6

__all__ = ["BACKEND", "FAR_DISTANCE", "border_distance_sweep", "raster_sweep"]
