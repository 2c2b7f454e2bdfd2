"""Kernel backend selection.

The compiled Cython extension is used when available; the pure-numpy
fallback is bit-compatible and is selected automatically when the
extension is missing, or forced with DSS_DISABLE_EXT=1.
"""

import os

if os.environ.get("DSS_DISABLE_EXT") == "1":
    from dss.backend import py_kernels as _impl
else:
    try:
        from dss.backend import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        from dss.backend import py_kernels as _impl  # type: ignore[no-redef]

COMPILED = _impl.COMPILED
im2col = _impl.im2col
col2im = _impl.col2im
jacobi_sweep = _impl.jacobi_sweep
