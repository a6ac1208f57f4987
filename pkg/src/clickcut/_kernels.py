"""Kernel backend selection: compiled extension if available, NumPy fallback otherwise.

Set CLICKCUT_PURE=1 to force the fallback (used by the parity tests and the
kernel benchmark).
"""
from __future__ import annotations

import os

from clickcut import _fallback

if os.environ.get("CLICKCUT_PURE") == "1":
    _impl = _fallback
    HAVE_NATIVE = False
else:
    try:
        from clickcut import _native as _impl  # type: ignore[no-redef]

        HAVE_NATIVE = True
    except ImportError:
        _impl = _fallback
        HAVE_NATIVE = False

BACKEND = "native" if HAVE_NATIVE else "python"

slic_assign_step = _impl.slic_assign_step
dinic_maxflow = _impl.dinic_maxflow
