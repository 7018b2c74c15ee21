import numpy as np
import pytest

from akd.errors import ContractError, NumericError
from akd.optim import (AdamWConfig, OptimizerState, adamw_step, decays,
                       lr_at)
from akd.tensor import Tensor


# ---------------------------------------------------------------- schedule


def test_lr_zero_at_start():
    assert lr_at(0.0, 1.0, 0.2) == pytest.approx(0.0)


def test_lr_peak_at_warmup_end():
    assert lr_at(0.2, 1.0, 0.2) == pytest.approx(1.0)


def test_lr_final_at_end():
    assert lr_at(1.0, 1.0, 0.2, final_lr=0.1) == pytest.approx(0.1)
    assert lr_at(1.0, 1.0, 0.2) == pytest.approx(0.0)


def test_lr_linear_during_warmup():
    assert lr_at(0.1, 1.0, 0.2) == pytest.approx(0.5)
    assert lr_at(0.05, 2.0, 0.2) == pytest.approx(0.5)


def test_lr_cosine_midpoint():
    # halfway through the cosine phase the lr is the mean of peak and final
    assert lr_at(0.6, 1.0, 0.2, final_lr=0.2) == pytest.approx(0.6)


def test_lr_continuous_at_warmup_boundary():
    w = 0.3
    eps = 1e-9
    lo = lr_at(w - eps, 1.0, w, final_lr=0.05)
    hi = lr_at(w + eps, 1.0, w, final_lr=0.05)
    assert abs(lo - hi) < 1e-6


def test_lr_monotone_decay_after_warmup():
    xs = np.linspace(0.25, 1.0, 200)
    ys = [lr_at(x, 1.0, 0.25) for x in xs]
    assert all(a >= b - 1e-12 for a, b in zip(ys, ys[1:]))


def test_lr_rejects_out_of_range():
    with pytest.raises(ContractError):
        lr_at(-0.1, 1.0, 0.2)
    with pytest.raises(ContractError):
        lr_at(1.1, 1.0, 0.2)


def test_lr_no_warmup():
    assert lr_at(0.0, 1.0, 0.0) == pytest.approx(1.0)


# --------------------------------------------------------- decay exclusion


def test_decay_marker_classification():
    assert decays("blocks.0.attn.wq")
    assert decays("patch_embed.weight")
    assert decays("projector.0.weight")
    assert not decays("patch_embed.bias")
    assert not decays("cls_token")
    assert not decays("blocks.0.ln1.gamma")
    assert not decays("blocks.0.ln1.beta")
    assert not decays("blocks.1.mlp.b1")
    assert not decays("blocks.1.attn.proj_b")


# ---------------------------------------------------------------- adamw


def make_state(params):
    return OptimizerState(params)


def test_zero_grad_no_decay_is_noop():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.zeros(2)
    params = {"cls_token": p}
    state = make_state(params)
    adamw_step(params, state, lr=0.1, cfg=AdamWConfig())
    assert np.allclose(p.data, [1.0, -2.0])


def test_step_moves_against_gradient():
    p = Tensor(np.array([0.0, 0.0]), requires_grad=True)
    p.grad = np.array([1.0, -1.0])
    params = {"cls_token": p}
    state = make_state(params)
    adamw_step(params, state, lr=0.1, cfg=AdamWConfig())
    assert p.data[0] < 0 < p.data[1]


def test_first_step_magnitude():
    # with bias correction the first step is almost exactly lr
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.array([3.0])
    params = {"cls_token": p}
    state = make_state(params)
    adamw_step(params, state, lr=0.1, cfg=AdamWConfig(eps=1e-12))
    assert p.data[0] == pytest.approx(-0.1, rel=1e-6)


def test_decoupled_weight_decay():
    # zero gradient, decayed parameter shrinks multiplicatively
    p = Tensor(np.array([2.0]), requires_grad=True)
    p.grad = np.array([0.0])
    params = {"layer.weight": p}
    state = make_state(params)
    adamw_step(params, state, lr=0.1,
               cfg=AdamWConfig(weight_decay=0.5))
    assert p.data[0] == pytest.approx(2.0 * (1 - 0.1 * 0.5))


def test_quadratic_convergence():
    rng = np.random.default_rng(0)
    target = rng.normal(0, 1, 8)
    p = Tensor(rng.normal(0, 1, 8), requires_grad=True)
    params = {"cls_token": p}
    state = make_state(params)
    cfg = AdamWConfig(weight_decay=0.0)
    for _ in range(200):
        p.grad = 2 * (p.data - target)
        adamw_step(params, state, lr=0.05, cfg=cfg)
    grad_norm = np.linalg.norm(2 * (p.data - target))
    assert grad_norm < 1e-3


def test_nan_gradient_names_parameter():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([np.nan])
    params = {"blocks.0.attn.wq": p}
    state = make_state(params)
    with pytest.raises(NumericError, match="blocks.0.attn.wq"):
        adamw_step(params, state, lr=0.1, cfg=AdamWConfig())


def test_missing_grad_skipped():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = None
    params = {"cls_token": p}
    state = make_state(params)
    adamw_step(params, state, lr=0.1, cfg=AdamWConfig())
    assert p.data[0] == 1.0


def test_step_counter_advances():
    p = Tensor(np.array([1.0]), requires_grad=True)
    params = {"cls_token": p}
    state = make_state(params)
    for i in range(3):
        p.grad = np.array([1.0])
        adamw_step(params, state, lr=0.01, cfg=AdamWConfig())
    assert state.step == 3
