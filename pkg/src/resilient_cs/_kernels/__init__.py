"""Hot-loop kernels with a compiled fast path.

The Cython extension is used when it was built; otherwise the numpy/Python
versions are used. Set ``RESILIENT_CS_PURE=1`` to force the fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("RESILIENT_CS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass


def im2col(x, k):
    return _impl.im2col(np.ascontiguousarray(x, dtype=np.float64), int(k))


def col2im(cols, b, c, h, w, k):
    return _impl.col2im(np.ascontiguousarray(cols, dtype=np.float64), int(b), int(c), int(h), int(w), int(k))


def gilbert_chain(u, p_enter, p_exit, start_lost):
    return _impl.gilbert_chain(np.ascontiguousarray(u, dtype=np.float64),
                               float(p_enter), float(p_exit), bool(start_lost))


__all__ = ["BACKEND", "im2col", "col2im", "gilbert_chain"]
