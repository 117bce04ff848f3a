"""Select the kernel backend at import time.

The compiled extension is used when it was built; setting the environment
variable ``PVNET_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("PVNET_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2x2_forward = _impl.maxpool2x2_forward
maxpool2x2_backward = _impl.maxpool2x2_backward
prelu_forward = _impl.prelu_forward
prelu_backward = _impl.prelu_backward
adam_step = _impl.adam_step


def available_backends():
    """Return ``{name: module}`` for every importable backend."""
    found = {"numpy": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
