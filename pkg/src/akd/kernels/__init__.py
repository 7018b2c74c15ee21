"""Kernel backend selection.

Prefers the compiled extension; falls back to the numpy implementation
when the extension is missing or AKD_PURE_PYTHON is set to a non-empty
value.
"""

import os

from . import kernels_py

if os.environ.get("AKD_PURE_PYTHON"):
    _backend = kernels_py
else:
    try:
        from . import _ckernels as _backend
    except ImportError:
        _backend = kernels_py

IMPL = _backend.IMPL

gelu_forward = _backend.gelu_forward
gelu_backward = _backend.gelu_backward
softmax_rows = _backend.softmax_rows
layernorm_rows = _backend.layernorm_rows
