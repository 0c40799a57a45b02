"""Kernel backend selection.

The compiled Cython kernels are used when the extension is importable;
otherwise the pure-Python kernels take over. The two are bitwise
interchangeable. Set PRECOND_ATTN_BACKEND=pure or =compiled to force a
choice (forcing `compiled` raises if the extension is missing).
"""

import os

from . import _kernels_py


def _select():
    choice = os.environ.get("PRECOND_ATTN_BACKEND", "auto").strip().lower()
    if choice in ("pure", "py", "python"):
        return _kernels_py, "pure"
    try:
        from . import _kernels_c
    except ImportError:
        if choice in ("compiled", "c", "cython"):
            raise ImportError(
                "PRECOND_ATTN_BACKEND=compiled but the extension is not built; "
                "reinstall the package with Cython and a C compiler available")
        return _kernels_py, "pure"
    return _kernels_c, "compiled"


K, BACKEND = _select()
