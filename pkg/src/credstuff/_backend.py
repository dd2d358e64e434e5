"""Kernel selection. Set CREDSTUFF_PURE_PYTHON=1 to force the fallback."""

import os

if os.environ.get("CREDSTUFF_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as kernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:  # extension not built
        from . import _pykernels as kernels

BACKEND = kernels.NAME

__all__ = ["kernels", "BACKEND"]
