"""Backend selection for the hot temporal-mixing kernels.

The compiled Cython extension is preferred when importable; setting the
environment variable STEMFLOW_PURE_PY=1 forces the numpy fallback (useful for
benchmark comparisons and for installs without a C toolchain).
"""

from __future__ import annotations

import os

from . import _ops_py

BACKEND = "numpy"
dwconv_forward = _ops_py.dwconv_forward
dwconv_backward = _ops_py.dwconv_backward
silu = _ops_py.silu
silu_grad = _ops_py.silu_grad

if os.environ.get("STEMFLOW_PURE_PY", "") != "1":
    try:
        from . import _ops_c  # type: ignore[attr-defined]

        dwconv_forward = _ops_c.dwconv_forward
        dwconv_backward = _ops_c.dwconv_backward
        silu = _ops_c.silu
        silu_grad = _ops_c.silu_grad
        BACKEND = "cython"
    except ImportError:
        pass


def backend() -> str:
    return BACKEND
