"""Central finite-difference gradient verification.

Used by the test suite and by the `grad-check` CLI command. The loss
under test is rebuilt from scratch on every evaluation so that the
finite-difference route never touches the tape.
"""

import numpy as np

from .tensor import backward, record_tape


def finite_diff_grad(f, leaf, h=1e-3):
    """Central-difference gradient of scalar f() w.r.t. one leaf tensor.

    f is a zero-argument callable returning a float; it must read the
    current contents of leaf.data.
    """
    base = leaf.data
    grad = np.zeros_like(base, dtype=np.float64)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    """Max absolute deviation scaled by the larger gradient magnitude."""
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(build_loss, leaves, h=1e-3, rtol=1e-4):
    """Compare tape gradients of build_loss() against finite differences.

    build_loss is called with no arguments and must return a scalar
    Tensor computed from the given leaf tensors. Returns a dict mapping
    leaf index -> relative error; raises AssertionError past rtol.
    """
    for leaf in leaves:
        leaf.zero_grad()
    with record_tape() as tape:
        loss = build_loss()
    backward(loss, tape)

    def scalar():
        return build_loss().item()

    errors = {}
    for i, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        numeric = finite_diff_grad(scalar, leaf, h=h)
        err = relative_error(analytic, numeric)
        errors[i] = err
        if err > rtol:
            raise AssertionError(
                f"gradient mismatch on leaf {i} (shape {leaf.shape}): "
                f"relative error {err:.3e} > {rtol:.1e}")
    return errors
