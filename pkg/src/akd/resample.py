"""2-D grid resampling for attention maps.

The fast path builds separable per-axis weight matrices (so resampling
is two small matrix products); `resample_reference` is a deliberately
naive nested-loop implementation of the same sampling rule, kept as an
independent cross-check for tests.

Bicubic uses the Keys convolution kernel with a = -0.5; source sample
coordinates are clamped to the grid at the borders for all modes.
"""

import numpy as np

from .errors import ConfigError

MODES = ("bicubic", "bilinear", "nearest")


def _keys_kernel(t, a=-0.5):
    t = abs(t)
    if t <= 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return 0.0


def _src_coord(i, n_out, n_in):
    # align output and input pixel centers
    return (i + 0.5) * (n_in / n_out) - 0.5


def _axis_weights(n_in, n_out, mode):
    """Weight matrix W (n_out x n_in): out = W @ in along one axis."""
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        x = _src_coord(i, n_out, n_in)
        if mode == "nearest":
            j = int(np.clip(round(x), 0, n_in - 1))
            w[i, j] = 1.0
        elif mode == "bilinear":
            j0 = int(np.floor(x))
            f = x - j0
            for j, wt in ((j0, 1.0 - f), (j0 + 1, f)):
                w[i, min(max(j, 0), n_in - 1)] += wt
        elif mode == "bicubic":
            j0 = int(np.floor(x))
            for j in range(j0 - 1, j0 + 3):
                wt = _keys_kernel(x - j)
                w[i, min(max(j, 0), n_in - 1)] += wt
        else:
            raise ConfigError(f"unknown interpolation mode {mode!r}")
    return w


def resample_grid(field, out_shape, mode="bicubic"):
    """Resample a 2-D field (or a stack of them) to out_shape.

    field: array of shape (..., h, w); returns (..., h', w').
    """
    if mode not in MODES:
        raise ConfigError(f"unknown interpolation mode {mode!r}")
    h_in, w_in = field.shape[-2:]
    h_out, w_out = out_shape
    wr = _axis_weights(h_in, h_out, mode)
    wc = _axis_weights(w_in, w_out, mode)
    return np.einsum("ij,...jk,lk->...il", wr, field, wc)


def resample_reference(field, out_shape, mode="bicubic"):
    """Brute-force resampler: evaluates the 2-D kernel product per output
    cell. Independent of the weight-matrix path above."""
    h_in, w_in = field.shape
    h_out, w_out = out_shape
    out = np.zeros((h_out, w_out))
    for oi in range(h_out):
        for oj in range(w_out):
            y = _src_coord(oi, h_out, h_in)
            x = _src_coord(oj, w_out, w_in)
            if mode == "nearest":
                si = int(np.clip(round(y), 0, h_in - 1))
                sj = int(np.clip(round(x), 0, w_in - 1))
                out[oi, oj] = field[si, sj]
                continue
            reach = 2 if mode == "bicubic" else 1
            i0, j0 = int(np.floor(y)), int(np.floor(x))
            acc = 0.0
            for si in range(i0 - reach + 1, i0 + reach + 1):
                for sj in range(j0 - reach + 1, j0 + reach + 1):
                    if mode == "bicubic":
                        wt = _keys_kernel(y - si) * _keys_kernel(x - sj)
                    else:
                        wt = max(0.0, 1 - abs(y - si)) * max(0.0, 1 - abs(x - sj))
                    ci = min(max(si, 0), h_in - 1)
                    cj = min(max(sj, 0), w_in - 1)
                    acc += wt * field[ci, cj]
            out[oi, oj] = acc
    return out
