"""Toy-scale ablation harness.

Three axes: student architectures, head-aggregation functions, and loss
variants. Each run distills briefly and reports k-NN accuracy of the
student features; results go to a CSV comparison table.
"""

import csv
import dataclasses
import logging
from dataclasses import replace

import numpy as np

from .evaluate import extract_features, knn_classify
from .losses import Projector
from .train import run_distillation
from .vit import init_params

log = logging.getLogger("akd.ablate")

CSV_FIELDS = ("axis", "variant", "lambda", "knn_accuracy",
              "loss_pa", "loss_ag", "loss_total")


def distill_and_eval(teacher, student_cfg, distill_cfg, train_cfg,
                     train_split, val_split, seed, eval_cfg=None):
    """One distillation run followed by k-NN evaluation."""
    t_params, t_cfg = teacher
    images, labels = train_split
    rng = np.random.default_rng(seed)
    s_params = init_params(student_cfg, rng, dtype=np.float32, trainable=True)
    projector = Projector(student_cfg.embed_dim, t_cfg.embed_dim, depth=4,
                          rng=rng, dtype=np.float32)
    metrics = run_distillation(teacher, (s_params, student_cfg), projector,
                               images, train_cfg, distill_cfg)
    k = eval_cfg.knn_k if eval_cfg else 20
    tau = eval_cfg.knn_tau if eval_cfg else 0.07
    train_bank = extract_features(s_params, student_cfg, images, labels)
    val_bank = extract_features(s_params, student_cfg, *val_split)
    acc = knn_classify(train_bank, val_bank, k=min(k, len(images)), tau=tau)
    last = metrics[-1]
    return {"knn_accuracy": acc, "loss_pa": last["loss_pa"],
            "loss_ag": last["loss_ag"], "loss_total": last["loss_total"]}


def _variants(cfg, axis):
    s = cfg.vit_student
    d = cfg.distill
    if axis == "architecture":
        archs = [
            ("base", s),
            ("half_depth", replace(s, layers=max(1, s.layers // 2))),
            ("coarse_patch", replace(s, patch_size=min(s.image_size,
                                                       s.patch_size * 2))),
        ]
        out = []
        for name, arch in archs:
            out.append((f"{name}_pa_only", arch, replace(d, lam=0.0)))
            out.append((f"{name}_pa_ag", arch, d))
        return out
    if axis == "aggregation":
        return [(agg, s, replace(d, aggregation=agg))
                for agg in ("log_sum", "mean", "min", "max")]
    if axis == "loss":
        t = cfg.vit_teacher
        return [
            ("pa_only", s, replace(d, lam=0.0)),
            ("pa_ag", s, d),
            ("pa_ag_all_layers", replace(s, layers=t.layers),
             replace(d, attention_layers="all")),
            ("pa_ag_patch_tokens", replace(s, patch_size=t.patch_size),
             replace(d, align_patch_tokens=True)),
        ]
    raise ValueError(f"unknown ablation axis {axis!r}")


def run_ablation(cfg, axis, teacher, data_dir, out_csv, epochs=10, seed=0):
    """Run one axis end to end; returns the CSV rows written."""
    from . import data as data_mod
    train_split = data_mod.read_raw(data_dir / "train.bin")
    val_split = data_mod.read_raw(data_dir / "val.bin")
    train_cfg = dataclasses.replace(
        cfg.train, total_epochs=epochs,
        warmup_epochs=max(1, min(epochs - 1, epochs // 5)))
    rows = []
    for variant, arch, distill_cfg in _variants(cfg, axis):
        log.info("ablate %s: %s", axis, variant)
        result = distill_and_eval(teacher, arch, distill_cfg, train_cfg,
                                  train_split, val_split, seed,
                                  eval_cfg=cfg.eval)
        rows.append({"axis": axis, "variant": variant,
                     "lambda": distill_cfg.lam, **result})
    with open(out_csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return rows
