"""Kernel selection: compiled extension when importable, else pure Python.

Set ``TRANSFER_EXPLORE_PURE_PYTHON=1`` to force the fallback.
"""
import os

if os.environ.get("TRANSFER_EXPLORE_PURE_PYTHON"):
    from . import _pykernels as kernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        from . import _pykernels as kernels

BACKEND = kernels.BACKEND
