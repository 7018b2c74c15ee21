"""Pure-numpy implementations of the hot elementwise/row kernels.

Same call signatures as the compiled extension; selected as a fallback
when the extension is unavailable or AKD_PURE_PYTHON is set.
"""

import numpy as np
from scipy.special import erf

IMPL = "numpy"

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_forward(x):
    """Exact (erf-based) GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_backward(x, gy):
    """d/dx GELU(x) times the incoming gradient gy."""
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return gy * (cdf + x * pdf)


def softmax_rows(x):
    """Row-wise softmax of a 2-D array, max-subtracted for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layernorm_rows(x, eps):
    """Row-wise standardization (pre-affine). Returns (xhat, inv_std)."""
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return (x - mu) * inv_std, inv_std
