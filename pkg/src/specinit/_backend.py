"""Selects the compiled kernels when importable, else the numpy fallback."""
import os

if os.environ.get("SPECINIT_PURE_PYTHON"):
    from . import _kernels_py as kernels

    NAME = "python"
else:
    try:
        from . import _kernels as kernels

        NAME = "cython"
    except ImportError:
        from . import _kernels_py as kernels

        NAME = "python"

__all__ = ["kernels", "NAME"]
