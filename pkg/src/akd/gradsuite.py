"""Finite-difference verification suite over all losses and a small ViT.

Each check rebuilds its loss from leaf tensors so the analytic gradient
(tape) and the central-difference gradient follow independent routes.
Run via the `grad-check` CLI command or the acceptance tests.
"""

import numpy as np

from . import tensor as T
from .fdcheck import check_gradients
from .losses import (ClassAttention, DistillConfig, Projector, ag_loss,
                     pa_loss, total_loss)
from .tensor import Tensor
from .vit import ViTConfig, init_params, vit_forward
from .losses import ag_loss_record, class_attention_from_record

H_FD = 1e-3
RTOL = 1e-4


def _rand_distribution(rng, shape):
    x = rng.uniform(0.3, 1.5, shape)
    return x / x.sum(axis=-1, keepdims=True)


def _student_attention(logits, grid):
    return ClassAttention(T.softmax(logits, axis=-1), grid)


def check_pa_loss(seed):
    rng = np.random.default_rng(seed)
    proj = Projector(5, 7, depth=4, rng=rng)
    student = Tensor(rng.normal(0, 1, (3, 5)), requires_grad=True)
    teacher = Tensor(rng.normal(0, 1, (3, 7)), requires_grad=True)
    leaves = [student] + [p for pair in proj.layers for p in pair]

    def build():
        return pa_loss(teacher, student, proj)

    check_gradients(build, leaves, h=H_FD, rtol=RTOL)
    if teacher.grad is not None and np.any(teacher.grad):
        raise AssertionError("gradient reached the teacher through pa_loss")


def _ag_case(seed, h_t, h_s, grid_t, grid_s, cfg):
    rng = np.random.default_rng(seed)
    n_t = grid_t[0] * grid_t[1]
    n_s = grid_s[0] * grid_s[1]
    teacher = ClassAttention(_rand_distribution(rng, (h_t, n_t + 1)), grid_t)
    logits = Tensor(rng.normal(0, 1, (h_s, n_s + 1)), requires_grad=True)

    def build():
        return ag_loss(teacher, _student_attention(logits, grid_s), cfg)

    check_gradients(build, [logits], h=H_FD, rtol=RTOL)


def check_ag_cases(seed):
    cfg = DistillConfig(temperature=2.0)
    _ag_case(seed, 3, 3, (2, 2), (2, 2), cfg)        # (a) same H, same N
    _ag_case(seed, 3, 3, (3, 3), (2, 2), cfg)        # (b) same H, diff N
    _ag_case(seed, 4, 2, (2, 2), (2, 2), cfg)        # (c) diff H, same N
    _ag_case(seed, 4, 2, (3, 3), (2, 2), cfg)        # (d) diff H, diff N
    for strategy in ("mean", "min", "max"):
        _ag_case(seed, 4, 2, (3, 3), (2, 2),
                 DistillConfig(aggregation=strategy))


def check_total_loss(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(0, 1, ()), requires_grad=True)
    b = Tensor(rng.normal(0, 1, ()), requires_grad=True)

    def build():
        pa = T.mul(a, a)
        ag = T.mul(b, T.mul(b, b))
        return total_loss(pa, ag, 0.1)

    check_gradients(build, [a, b], h=H_FD, rtol=RTOL)


def check_vit_with_losses(seed, block_form="mlp_ln"):
    """2-layer ViT pair composed with the combined distillation loss."""
    rng = np.random.default_rng(seed)
    t_cfg = ViTConfig(image_size=8, patch_size=2, layers=2, heads=2,
                      head_dim=3, mlp_hidden=12, channels=1,
                      block_form=block_form)
    s_cfg = ViTConfig(image_size=8, patch_size=4, layers=2, heads=1,
                      head_dim=4, mlp_hidden=8, channels=1,
                      block_form=block_form)
    t_params = init_params(t_cfg, rng, trainable=False)
    s_params = init_params(s_cfg, rng, trainable=True)
    # non-degenerate weights so attention is not uniform
    for k, p in s_params.items():
        if p.data.ndim == 2 and "weight" not in k:
            p.data = rng.normal(0, 0.3, p.data.shape)
    proj = Projector(s_cfg.embed_dim, t_cfg.embed_dim, depth=2, rng=rng)
    image = rng.uniform(-1, 1, (1, 1, 8, 8))
    cfg = DistillConfig(temperature=2.0)
    t_out = vit_forward(image, t_params, t_cfg)

    def build():
        s_out = vit_forward(image, s_params, s_cfg)
        pa = pa_loss(t_out.class_token, s_out.class_token, proj)
        ag = ag_loss_record(t_out.attention, s_out.attention, cfg)
        return total_loss(pa, ag, cfg.lam)

    leaves = list(s_params.values()) + [p for pair in proj.layers for p in pair]
    check_gradients(build, leaves, h=H_FD, rtol=RTOL)


def run_suite(seeds=(0, 1, 2), verbose=print):
    """Run every check on every seed; returns list of (name, ok, detail)."""
    checks = [
        ("pa_loss", check_pa_loss),
        ("ag_loss_cases", check_ag_cases),
        ("total_loss", check_total_loss),
        ("vit_mlp_ln", lambda s: check_vit_with_losses(s, "mlp_ln")),
        ("vit_pre_ln", lambda s: check_vit_with_losses(s, "pre_ln")),
    ]
    results = []
    for name, fn in checks:
        for seed in seeds:
            try:
                fn(seed)
                results.append((f"{name}[seed={seed}]", True, ""))
            except AssertionError as e:
                results.append((f"{name}[seed={seed}]", False, str(e)))
    if verbose:
        for label, ok, detail in results:
            verbose(f"{'PASS' if ok else 'FAIL'} {label}"
                    + (f": {detail}" if detail else ""))
    return results
