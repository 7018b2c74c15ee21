"""Distillation training loop and toy-scale supervised teacher training.

The teacher is frozen (no optimizer state, forward passes run off-tape);
the student and projector share one AdamW optimizer and schedule. One
view is processed per sample per epoch: no multi-crop.
"""

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import tensor as T
from .checkpoint import save_model
from .errors import ConfigError
from .losses import (DistillConfig, Projector, ag_loss_record, pa_loss,
                     patch_token_alignment, total_loss)
from .optim import AdamWConfig, OptimizerState, adamw_step, lr_at
from .tensor import Tensor, backward, record_tape
from .vit import vit_forward

log = logging.getLogger("akd.train")


@dataclass
class TrainConfig:
    batch_size: int = 64
    total_epochs: int = 100
    warmup_epochs: int = -1      # -1 -> 40, scaled down for short runs
    base_lr: float = -1.0        # -1 -> 1.5e-4 * batch_size / 256
    final_lr: float = 0.0
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    augment: bool = True
    ckpt_every: int = 0          # 0 -> final checkpoint only

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.warmup_epochs < 0:
            self.warmup_epochs = (40 if self.total_epochs >= 200 else
                                  max(1, round(40 * self.total_epochs / 200)))
        if self.warmup_epochs >= self.total_epochs:
            raise ConfigError("warmup_epochs must be < total_epochs")
        if self.base_lr < 0:
            self.base_lr = 1.5e-4 * self.batch_size / 256.0

    @property
    def warmup_fraction(self):
        return self.warmup_epochs / self.total_epochs

    def adamw(self):
        return AdamWConfig(beta1=self.beta1, beta2=self.beta2,
                           eps=self.adam_eps, weight_decay=self.weight_decay)

    def to_dict(self):
        return {
            "batch_size": self.batch_size, "total_epochs": self.total_epochs,
            "warmup_epochs": self.warmup_epochs, "base_lr": self.base_lr,
            "final_lr": self.final_lr, "weight_decay": self.weight_decay,
            "beta1": self.beta1, "beta2": self.beta2,
            "adam_eps": self.adam_eps, "seed": self.seed,
            "augment": self.augment, "ckpt_every": self.ckpt_every,
        }


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy from a (B, C) logits tensor."""
    probs = T.clamp_min(T.softmax(logits, axis=-1), 1e-12)
    picked = T.gather_labels(T.log(probs), labels)
    return T.scale(T.tmean(picked), -1.0)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def distill_epoch(teacher, student, projector, images, cfg_train, cfg_distill,
                  opt_state, epoch, rng):
    """One pass over the data; returns epoch metrics.

    teacher/student are (params, vit_config) pairs. Teacher forwards run
    without a tape so no gradient state is ever created for them.
    """
    t_params, t_cfg = teacher
    s_params, s_cfg = student
    all_params = dict(s_params)
    all_params.update(projector.param_dict())
    # mid-epoch schedule sample so neither endpoint runs at lr 0
    frac = (epoch + 0.5) / cfg_train.total_epochs
    lr = lr_at(frac, cfg_train.base_lr, cfg_train.warmup_fraction,
               cfg_train.final_lr)
    sums = {"loss_pa": 0.0, "loss_ag": 0.0, "loss_total": 0.0}
    n_batches = 0
    views = 0
    for idx in _batches(len(images), cfg_train.batch_size, rng):
        batch = images[idx]
        if cfg_train.augment:
            batch = data_mod.augment(batch, rng)
        x = data_mod.to_float(batch, dtype=s_params_dtype(s_params))
        t_out = vit_forward(x, t_params, t_cfg)          # off-tape, frozen
        with record_tape() as tape:
            s_out = vit_forward(x, s_params, s_cfg)
            l_pa = pa_loss(t_out.class_token, s_out.class_token, projector,
                           reduction=cfg_distill.pa_reduction)
            if cfg_distill.align_patch_tokens:
                l_pa = T.add(l_pa, patch_token_alignment(
                    t_out.patch_tokens, s_out.patch_tokens, projector))
            l_ag = ag_loss_record(t_out.attention, s_out.attention, cfg_distill)
            loss = total_loss(l_pa, l_ag, cfg_distill.lam)
            for p in all_params.values():
                p.zero_grad()
            backward(loss, tape)
        adamw_step(all_params, opt_state, lr, cfg_train.adamw())
        sums["loss_pa"] += l_pa.item()
        sums["loss_ag"] += l_ag.item()
        sums["loss_total"] += loss.item()
        n_batches += 1
        views += len(idx)
    return {
        "epoch": epoch,
        "lr": lr,
        "loss_pa": sums["loss_pa"] / n_batches,
        "loss_ag": sums["loss_ag"] / n_batches,
        "loss_total": sums["loss_total"] / n_batches,
        "views": views,
    }


def s_params_dtype(params):
    return next(iter(params.values())).dtype


def run_distillation(teacher, student, projector, images, cfg_train,
                     cfg_distill, out_dir=None, metrics_path=None):
    """Full distillation run. Returns the list of per-epoch metrics.

    Writes one JSON object per line to metrics_path (epoch, lr, loss_pa,
    loss_ag, loss_total, wall_time_s) and periodic/final checkpoints to
    out_dir when given.
    """
    s_params, s_cfg = student
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    opt_state = OptimizerState({**dict(s_params), **projector.param_dict()})
    rng = np.random.default_rng(cfg_train.seed)
    metrics = []
    mf = open(metrics_path, "w") if metrics_path else None
    try:
        for epoch in range(cfg_train.total_epochs):
            t0 = time.monotonic()
            m = distill_epoch(teacher, student, projector, images, cfg_train,
                              cfg_distill, opt_state, epoch, rng)
            m["wall_time_s"] = time.monotonic() - t0
            metrics.append(m)
            log.info("epoch %d lr %.3g loss %.5f (pa %.5f ag %.5f)",
                     epoch, m["lr"], m["loss_total"], m["loss_pa"], m["loss_ag"])
            if mf:
                mf.write(json.dumps(m) + "\n")
                mf.flush()
            if out_dir and cfg_train.ckpt_every and \
                    (epoch + 1) % cfg_train.ckpt_every == 0:
                _save_student(out_dir / f"student_epoch{epoch + 1:04d}.akd",
                              s_params, projector)
        if out_dir:
            _save_student(out_dir / "student_final.akd", s_params, projector)
    finally:
        if mf:
            mf.close()
    return metrics


def _save_student(path, s_params, projector):
    params = dict(s_params)
    params.update(projector.param_dict())
    save_model(path, params)


def train_supervised(params, cfg, images, labels, n_classes, epochs, lr,
                     batch_size=64, seed=0, weight_decay=0.05, augment=True,
                     val=None, dtype=np.float32):
    """Toy-scale supervised pretraining (used for desk-scale teachers).

    Trains a linear head on the class token jointly with the encoder.
    Returns (head_params, history).
    """
    rng = np.random.default_rng(seed)
    d = params["cls_token"].shape[-1]
    head = {
        "head.weight": Tensor(rng.normal(0, 0.02, (d, n_classes)).astype(dtype),
                              requires_grad=True),
        "head.bias": Tensor(np.zeros(n_classes, dtype=dtype), requires_grad=True),
    }
    all_params = {**params, **head}
    opt = OptimizerState(all_params)
    adamw_cfg = AdamWConfig(weight_decay=weight_decay)
    warmup_frac = min(0.1, 2.0 / epochs)
    history = []
    for epoch in range(epochs):
        # sample the schedule mid-epoch so neither endpoint runs at lr 0
        frac = (epoch + 0.5) / epochs
        cur_lr = lr_at(frac, lr, warmup_frac)
        tot, nb = 0.0, 0
        for idx in _batches(len(images), batch_size, rng):
            batch = images[idx]
            if augment:
                batch = data_mod.augment(batch, rng)
            x = data_mod.to_float(batch, dtype=dtype)
            with record_tape() as tape:
                out = vit_forward(x, params, cfg)
                logits = T.add(T.matmul(out.class_token, head["head.weight"]),
                               head["head.bias"])
                loss = cross_entropy(logits, labels[idx])
                for p in all_params.values():
                    p.zero_grad()
                backward(loss, tape)
            adamw_step(all_params, opt, cur_lr, adamw_cfg)
            tot += loss.item()
            nb += 1
        entry = {"epoch": epoch, "lr": cur_lr, "loss": tot / nb}
        if val is not None:
            entry["val_acc"] = classify_accuracy(params, cfg, head, *val)
        history.append(entry)
        log.info("teacher epoch %d loss %.4f%s", epoch, entry["loss"],
                 f" val {entry.get('val_acc', 0):.3f}" if val is not None else "")
    return head, history


def classify_accuracy(params, cfg, head, images, labels, batch_size=256):
    """Top-1 accuracy of encoder + linear head, no augmentation."""
    correct = 0
    for start in range(0, len(images), batch_size):
        x = data_mod.to_float(images[start:start + batch_size],
                              dtype=s_params_dtype(params))
        out = vit_forward(x, params, cfg)
        logits = out.class_token.data @ head["head.weight"].data + \
            head["head.bias"].data
        correct += int((logits.argmax(axis=1) ==
                        labels[start:start + batch_size]).sum())
    return correct / len(images)
