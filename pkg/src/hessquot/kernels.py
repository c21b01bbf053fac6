"""Backend selection for the batched symmetric-function kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Setting ``HESSQUOT_PURE_PYTHON=1`` forces the fallback.
"""

import os

from hessquot import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("HESSQUOT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from hessquot import _kernels as _compiled
    except ImportError:
        _compiled = None
    if _compiled is not None:
        _impl = _compiled
        BACKEND = "cython"


def available_backends():
    """Map of backend name to module, for tests and benchmarks."""
    out = {"python": _kernels_py}
    try:
        from hessquot import _kernels as compiled
    except ImportError:
        return out
    out["cython"] = compiled
    return out


esym = _impl.esym
esym_deleted = _impl.esym_deleted
esym_deleted2 = _impl.esym_deleted2
quotient_grad = _impl.quotient_grad
