"""AdamW with decoupled weight decay and a warmup/cosine schedule."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError

# substrings of parameter names excluded from weight decay
NO_DECAY_MARKERS = (".bias", ".beta", ".gamma", "cls_token",
                    ".b1", ".b2", ".bq", ".bk", ".bv", ".proj_b")


def decays(name):
    return not any(m in name for m in NO_DECAY_MARKERS)


@dataclass
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05


class OptimizerState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, params):
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.step = 0


def adamw_step(params, state, lr, cfg=None):
    """One AdamW update in place, reading gradients from param.grad.

    Weight decay is decoupled and skipped for biases, LN affines and the
    class token. Parameters without a gradient are left untouched.
    """
    cfg = cfg or AdamWConfig()
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if cfg.weight_decay and decays(name):
            p.data -= lr * cfg.weight_decay * p.data
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def lr_at(epoch_fraction, base_lr, warmup_fraction, final_lr=0.0):
    """Linear warmup to base_lr, then cosine decay to final_lr.

    epoch_fraction is the position in the run, in [0, 1].
    """
    if not 0.0 <= epoch_fraction <= 1.0:
        raise ContractError(f"epoch fraction {epoch_fraction} outside [0, 1]")
    if warmup_fraction > 0 and epoch_fraction < warmup_fraction:
        return base_lr * epoch_fraction / warmup_fraction
    if warmup_fraction >= 1.0:
        return base_lr
    t = (epoch_fraction - warmup_fraction) / (1.0 - warmup_fraction)
    return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + np.cos(np.pi * t))
