"""Distillation losses.

Projector alignment: MSE between the teacher class token and a learned
projection of the student class token. Attention guidance: KL divergence
between teacher and student class-token attention distributions, with
grid interpolation and head aggregation bridging mismatched shapes.

Teacher-side inputs are always detached; no gradient ever reaches a
teacher tensor through these losses.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import (ConfigError, ContractError, DimensionError,
                     UnsupportedCombinationError)
from .resample import MODES, resample_grid
from .tensor import Tensor


@dataclass
class DistillConfig:
    lam: float = 0.1            # weight of the attention-guidance term
    temperature: float = 10.0   # inside log-sum head aggregation only
    log_floor: float = 1e-8
    interpolation: str = "bicubic"
    aggregation: str = "log_sum"    # log_sum | mean | min | max
    attention_layers: str = "last"  # last | all
    align_patch_tokens: bool = False
    head_reduce: str = "sum"        # sum | mean over per-head KL terms
    pa_reduction: str = "mean"      # mean | sum over embedding dims

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.temperature <= 0:
            raise ConfigError("temperature must be > 0")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be > 0")
        if self.interpolation not in MODES:
            raise ConfigError(f"unknown interpolation {self.interpolation!r}")
        if self.aggregation not in ("log_sum", "mean", "min", "max"):
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        if self.attention_layers not in ("last", "all"):
            raise ConfigError(f"attention_layers must be last|all")
        if self.head_reduce not in ("sum", "mean"):
            raise ConfigError("head_reduce must be sum|mean")
        if self.pa_reduction not in ("mean", "sum"):
            raise ConfigError("pa_reduction must be mean|sum")

    def to_dict(self):
        return {
            "lam": self.lam, "temperature": self.temperature,
            "log_floor": self.log_floor, "interpolation": self.interpolation,
            "aggregation": self.aggregation,
            "attention_layers": self.attention_layers,
            "align_patch_tokens": self.align_patch_tokens,
            "head_reduce": self.head_reduce, "pa_reduction": self.pa_reduction,
        }


@dataclass
class ClassAttention:
    """Per-head class-token attention distributions plus the patch grid.

    heads: array/Tensor of shape (..., H, N+1); entry 0 of the last axis
    is the class self-attention, entries 1..N the patch attentions laid
    out row-major on a (w, h) grid with w * h == N.
    """
    heads: object
    grid: tuple

    @property
    def n_heads(self):
        return self.heads.shape[-2]

    @property
    def n_patches(self):
        return self.heads.shape[-1] - 1


def class_attention_from_record(record, layer=-1):
    """Build a ClassAttention from one layer of an AttentionRecord."""
    return ClassAttention(heads=record.class_rows[layer], grid=record.grid)


# ---------------------------------------------------------------------------
# projector


class Projector:
    """Stack of affine layers mapping student width to teacher width.

    GELU between hidden layers, nothing after the last. Hidden width is
    the teacher width.
    """

    def __init__(self, in_dim, out_dim, depth=4, rng=None, dtype=np.float64,
                 trainable=True):
        if depth < 1:
            raise ConfigError("projector depth must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.depth = depth
        self.layers = []
        for i in range(depth):
            d_in = in_dim if i == 0 else out_dim
            w = Tensor(rng.normal(0.0, 0.02, (d_in, out_dim)).astype(dtype),
                       requires_grad=trainable)
            b = Tensor(np.zeros(out_dim, dtype=dtype), requires_grad=trainable)
            self.layers.append((w, b))

    def __call__(self, x):
        if x.shape[-1] != self.in_dim:
            raise ConfigError(
                f"projector expects width {self.in_dim}, got {x.shape[-1]}")
        for i, (w, b) in enumerate(self.layers):
            x = T.add(T.matmul(x, w), b)
            if i < self.depth - 1:
                x = T.gelu(x)
        return x

    def param_dict(self, prefix="projector"):
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"{prefix}.{i}.weight"] = w
            out[f"{prefix}.{i}.bias"] = b
        return out


def pa_loss(teacher_cls, student_cls, projector, reduction="mean"):
    """Projector-alignment loss: MSE(teacher_cls, P(student_cls)).

    Mean over the teacher embedding dims by default ("sum" gives the
    plain sum of squares). Batched inputs are averaged over the batch.
    The teacher side carries no gradient.
    """
    t = teacher_cls.detach() if isinstance(teacher_cls, Tensor) else Tensor(teacher_cls)
    if t.shape[-1] != projector.out_dim:
        raise ConfigError(
            f"teacher width {t.shape[-1]} != projector output {projector.out_dim}")
    proj = projector(student_cls)
    diff = T.sub(t, proj)
    sq = T.mul(diff, diff)
    per_sample = T.tmean(sq, axis=-1) if reduction == "mean" else T.tsum(sq, axis=-1)
    return T.tmean(per_sample) if per_sample.ndim > 0 else per_sample


# ---------------------------------------------------------------------------
# attention guidance


def _check_normalized(arr, what, tol=1e-5):
    sums = np.asarray(arr).sum(axis=-1)
    if np.abs(sums - 1.0).max() > tol:
        raise ContractError(
            f"{what} not normalized: worst sum {sums.reshape(-1)[np.abs(sums - 1).argmax()]:.6g}")


def kl_divergence(p, q, eps=1e-8):
    """KL(p || q) over the last axis, floored logs, summed; scalar Tensor.

    p is the (gradient-free) target; gradient flows to q only. Both must
    be normalized within 1e-5 along the last axis.
    """
    p_arr = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
    q = q if isinstance(q, Tensor) else Tensor(q)
    if p_arr.shape[-1] != q.shape[-1]:
        raise DimensionError(
            f"kl_divergence length mismatch: {p_arr.shape[-1]} vs {q.shape[-1]}")
    _check_normalized(p_arr, "kl_divergence target p")
    _check_normalized(q.data, "kl_divergence argument q")
    log_p = np.log(np.maximum(p_arr, eps))
    log_q = T.log(T.clamp_min(q, eps))
    terms = T.mul(Tensor(p_arr), T.sub(Tensor(log_p), log_q))
    out = T.tsum(terms, axis=-1)
    return T.tmean(out) if out.ndim > 0 else out


def _kl_lastaxis(p_arr, q, eps):
    """KL over the last axis only; keeps leading axes. q is a Tensor."""
    log_p = np.log(np.maximum(p_arr, eps))
    log_q = T.log(T.clamp_min(q, eps))
    terms = T.mul(Tensor(p_arr), T.sub(Tensor(log_p), log_q))
    return T.tsum(terms, axis=-1)


def interpolate_attention(head_vec, grid_in, grid_out, mode="bicubic"):
    """Resample patch attentions to a new grid, keeping the class entry.

    head_vec: array (..., N_in + 1). The patch part is reshaped to the
    (w, h) input grid, resampled, clamped at zero, then rescaled so it
    sums to 1 - a0. Returns (vector (..., N_out + 1), fallback_mask) —
    the mask marks entries whose patch mass vanished after clamping and
    was replaced by a uniform distribution.
    """
    head_vec = np.asarray(head_vec, dtype=np.float64)
    w_in, h_in = grid_in
    w_out, h_out = grid_out
    n_in = w_in * h_in
    n_out = w_out * h_out
    if head_vec.shape[-1] != n_in + 1:
        raise DimensionError(
            f"attention length {head_vec.shape[-1]} != grid {grid_in} + class entry")
    a0 = head_vec[..., 0]
    field = head_vec[..., 1:].reshape(head_vec.shape[:-1] + (h_in, w_in))
    res = resample_grid(field, (h_out, w_out), mode=mode)
    res = np.maximum(res, 0.0)
    flat = res.reshape(head_vec.shape[:-1] + (n_out,))
    total = flat.sum(axis=-1)
    fallback = total <= 0.0
    safe_total = np.where(fallback, 1.0, total)
    scaled = flat * ((1.0 - a0) / safe_total)[..., None]
    uniform = ((1.0 - a0) / n_out)[..., None] * np.ones_like(flat)
    patches = np.where(fallback[..., None], uniform, scaled)
    out = np.concatenate([a0[..., None], patches], axis=-1)
    return out, fallback


def aggregate_heads(heads, temperature=10.0, eps=1e-8):
    """Log-sum head fusion: softmax((1/T) * sum_h log a_h).

    heads: Tensor or array with the head axis at -2; returns the fused
    distribution over the last axis (head axis removed). Differentiable
    when given a Tensor.
    """
    heads = heads if isinstance(heads, Tensor) else Tensor(heads)
    if heads.ndim < 2 or heads.shape[-2] < 1:
        raise ContractError("aggregate_heads needs at least one head")
    logs = T.log(T.clamp_min(heads, eps))
    logits = T.scale(T.tsum(logs, axis=-2), 1.0 / temperature)
    return T.softmax(logits, axis=-1)


def aggregate_heads_alt(heads, strategy, eps=1e-8):
    """MEAN/MIN/MAX head fusion followed by renormalization."""
    heads = heads if isinstance(heads, Tensor) else Tensor(heads)
    if heads.ndim < 2 or heads.shape[-2] < 1:
        raise ContractError("aggregate_heads_alt needs at least one head")
    if strategy == "mean":
        fused = T.tmean(heads, axis=-2)
    elif strategy == "min":
        fused = T.reduce_min(heads, axis=-2)
    elif strategy == "max":
        fused = T.reduce_max(heads, axis=-2)
    else:
        raise ConfigError(f"unknown aggregation strategy {strategy!r}")
    return T.div(fused, T.tsum(fused, axis=-1, keepdims=True))


def _aggregate(heads, cfg):
    if cfg.aggregation == "log_sum":
        return aggregate_heads(heads, cfg.temperature, cfg.log_floor)
    return aggregate_heads_alt(heads, cfg.aggregation, cfg.log_floor)


def _square_grid(grid, what):
    w, h = grid
    if w != h:
        raise DimensionError(f"{what} grid {grid} is not square")


def ag_loss(teacher, student, cfg=None, force_interpolate=False):
    """Attention-guidance loss between two ClassAttention records.

    Dispatches on head-count and patch-count (in)equality:
      same H, same N   -> per-head KL;
      same H, diff N   -> interpolate teacher heads, per-head KL;
      diff H, same N   -> aggregate both sides, single KL;
      diff H, diff N   -> interpolate, aggregate, single KL.
    Teacher attention is gradient-free; batched leading axes are
    averaged in index order. force_interpolate routes equal-grid input
    through the resampling path anyway (identity resampling).
    """
    cfg = cfg or DistillConfig()
    _square_grid(teacher.grid, "teacher")
    _square_grid(student.grid, "student")
    t_heads = (teacher.heads.data if isinstance(teacher.heads, Tensor)
               else np.asarray(teacher.heads, dtype=np.float64))
    s_heads = (student.heads if isinstance(student.heads, Tensor)
               else Tensor(student.heads))
    _check_normalized(t_heads, "teacher attention")
    _check_normalized(s_heads.data, "student attention")

    if teacher.n_patches != student.n_patches or force_interpolate:
        t_heads, _ = interpolate_attention(
            t_heads, teacher.grid, student.grid, cfg.interpolation)

    if teacher.n_heads == student.n_heads:
        per_head = _kl_lastaxis(t_heads, s_heads, cfg.log_floor)  # (..., H)
        reduce = T.tsum if cfg.head_reduce == "sum" else T.tmean
        per_sample = reduce(per_head, axis=-1)
    else:
        t_agg = _aggregate(Tensor(t_heads), cfg).data
        s_agg = _aggregate(s_heads, cfg)
        per_sample = _kl_lastaxis(t_agg, s_agg, cfg.log_floor)

    return T.tmean(per_sample) if per_sample.ndim > 0 else per_sample


def ag_loss_record(teacher_rec, student_rec, cfg=None, teacher_grid=None,
                   student_grid=None):
    """ag_loss over AttentionRecords, honoring attention_layers last|all."""
    cfg = cfg or DistillConfig()
    t_grid = teacher_grid or teacher_rec.grid
    s_grid = student_grid or student_rec.grid
    if cfg.attention_layers == "last":
        layers = [-1]
    else:
        if len(teacher_rec.class_rows) != len(student_rec.class_rows):
            raise UnsupportedCombinationError(
                "attention_layers=all needs equal teacher/student depth "
                f"({len(teacher_rec.class_rows)} vs {len(student_rec.class_rows)})")
        layers = range(len(teacher_rec.class_rows))
    losses = [
        ag_loss(ClassAttention(teacher_rec.class_rows[l], t_grid),
                ClassAttention(student_rec.class_rows[l], s_grid), cfg)
        for l in layers
    ]
    total = losses[0]
    for term in losses[1:]:
        total = T.add(total, term)
    return T.scale(total, 1.0 / len(losses))


def total_loss(pa, ag, lam):
    """Combined objective: pa + lam * ag."""
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    pa = pa if isinstance(pa, Tensor) else Tensor(pa)
    ag = ag if isinstance(ag, Tensor) else Tensor(ag)
    return T.add(pa, T.scale(ag, lam))


def patch_token_alignment(teacher_patches, student_patches, projector,
                          reduction="mean"):
    """MSE between teacher patch tokens and projected student tokens.

    Defined only when the two models share a patch count.
    """
    t = (teacher_patches.detach() if isinstance(teacher_patches, Tensor)
         else Tensor(teacher_patches))
    s = student_patches
    if t.shape[-2] != s.shape[-2]:
        raise UnsupportedCombinationError(
            f"patch-token alignment undefined for differing patch counts "
            f"({t.shape[-2]} vs {s.shape[-2]})")
    proj = projector(s)
    diff = T.sub(t, proj)
    sq = T.mul(diff, diff)
    per_token = T.tmean(sq, axis=-1) if reduction == "mean" else T.tsum(sq, axis=-1)
    return T.tmean(per_token)
