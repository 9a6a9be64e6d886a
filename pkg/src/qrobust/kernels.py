"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
fallback. Set ``QROBUST_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("QROBUST_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

BACKEND = _impl.BACKEND
apply_1q = _impl.apply_1q
apply_x = _impl.apply_x
apply_cz = _impl.apply_cz
z_expectations = _impl.z_expectations
grad_1q = _impl.grad_1q

__all__ = ["BACKEND", "apply_1q", "apply_x", "apply_cz", "z_expectations", "grad_1q"]
