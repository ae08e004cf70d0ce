"""Kernel selection: the compiled extension when importable, otherwise the
pure-Python fallback. Set ``MPXA_PURE_PYTHON=1`` to force the fallback."""
from __future__ import annotations

import os

if os.environ.get("MPXA_PURE_PYTHON", "") not in ("", "0"):
    from mpxa._kernels_py import coalesce, lu_solve

    BACKEND = "python"
else:
    try:
        from mpxa._kernels import coalesce, lu_solve

        BACKEND = "compiled"
    except ImportError:  # extension not built
        from mpxa._kernels_py import coalesce, lu_solve

        BACKEND = "python"

__all__ = ["BACKEND", "coalesce", "lu_solve"]
