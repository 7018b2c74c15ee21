# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Mirrors kernels_py; operates on C-contiguous float32/float64 arrays.
"""

import numpy as np

cimport cython
from libc.math cimport erf, exp, sqrt

ctypedef fused floating:
    float
    double

IMPL = "cython"

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT2PI = 0.3989422804014327


def gelu_forward(x):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    _gelu_forward(x.reshape(-1), out.reshape(-1))
    return out


def gelu_backward(x, gy):
    x = np.ascontiguousarray(x)
    gy = np.ascontiguousarray(gy, dtype=x.dtype)
    out = np.empty_like(x)
    _gelu_backward(x.reshape(-1), gy.reshape(-1), out.reshape(-1))
    return out


def softmax_rows(x):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    _softmax_rows(x, out)
    return out


def layernorm_rows(x, eps):
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    inv_std = np.empty((x.shape[0], 1), dtype=x.dtype)
    _layernorm_rows(x, out, inv_std.reshape(-1), float(eps))
    return out, inv_std


def _gelu_forward(floating[::1] x, floating[::1] out):
    cdef Py_ssize_t i
    cdef double v
    for i in range(x.shape[0]):
        v = x[i]
        out[i] = <floating>(0.5 * v * (1.0 + erf(v * INV_SQRT2)))


def _gelu_backward(floating[::1] x, floating[::1] gy,
                   floating[::1] out):
    cdef Py_ssize_t i
    cdef double v, cdf, pdf
    for i in range(x.shape[0]):
        v = x[i]
        cdf = 0.5 * (1.0 + erf(v * INV_SQRT2))
        pdf = exp(-0.5 * v * v) * INV_SQRT2PI
        out[i] = <floating>(gy[i] * (cdf + v * pdf))


def _softmax_rows(floating[:, ::1] x, floating[:, ::1] out):
    cdef Py_ssize_t i, j, n = x.shape[0], m = x.shape[1]
    cdef double mx, s
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(m):
            out[i, j] = <floating>exp(x[i, j] - mx)
            s += out[i, j]
        for j in range(m):
            out[i, j] = <floating>(out[i, j] / s)


def _layernorm_rows(floating[:, ::1] x, floating[:, ::1] out,
                    floating[::1] inv_std, double eps):
    cdef Py_ssize_t i, j, n = x.shape[0], m = x.shape[1]
    cdef double mu, var, d, isd
    for i in range(n):
        mu = 0.0
        for j in range(m):
            mu += x[i, j]
        mu /= m
        var = 0.0
        for j in range(m):
            d = x[i, j] - mu
            var += d * d
        var /= m
        isd = 1.0 / sqrt(var + eps)
        inv_std[i] = <floating>isd
        for j in range(m):
            out[i, j] = <floating>((x[i, j] - mu) * isd)
