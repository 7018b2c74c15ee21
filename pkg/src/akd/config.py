"""Run-configuration documents.

A run config is a JSON object with sections vit_teacher, vit_student,
distill, train and (optionally) eval. Unknown keys are rejected with the
offending path; values are type-checked before any compute starts.
"""

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .losses import DistillConfig
from .train import TrainConfig
from .vit import ViTConfig

_VIT_KEYS = {
    "image_size": int, "patch_size": int, "layers": int, "heads": int,
    "head_dim": int, "mlp_hidden": int, "block_form": str,
    "pos_embed": str, "channels": int,
}
_DISTILL_KEYS = {
    "lambda": float, "temperature": float, "log_floor": float,
    "interpolation": str, "aggregation": str, "attention_layers": str,
    "align_patch_tokens": bool, "head_reduce": str, "pa_reduction": str,
    "projector_depth": int,
}
_TRAIN_KEYS = {
    "batch_size": int, "total_epochs": int, "warmup_epochs": int,
    "base_lr": float, "final_lr": float, "weight_decay": float,
    "beta1": float, "beta2": float, "adam_eps": float, "seed": int,
    "augment": bool, "ckpt_every": int,
}
_EVAL_KEYS = {
    "knn_k": int, "knn_tau": float, "probe_epochs": int, "probe_lr": float,
}
_SECTIONS = {
    "vit_teacher": _VIT_KEYS, "vit_student": _VIT_KEYS,
    "distill": _DISTILL_KEYS, "train": _TRAIN_KEYS, "eval": _EVAL_KEYS,
}


@dataclass
class EvalConfig:
    knn_k: int = 20
    knn_tau: float = 0.07
    probe_epochs: int = 50
    probe_lr: float = 1e-3


@dataclass
class RunConfig:
    vit_teacher: ViTConfig
    vit_student: ViTConfig
    distill: DistillConfig
    train: TrainConfig
    eval: EvalConfig = field(default_factory=EvalConfig)
    projector_depth: int = 4


def _check_section(name, doc, keys):
    if not isinstance(doc, dict):
        raise ConfigError(f"{name}: expected an object")
    for key, value in doc.items():
        if key not in keys:
            raise ConfigError(f"unknown key at {name}.{key}")
        want = keys[key]
        ok = isinstance(value, want) or (want is float and
                                         isinstance(value, int) and
                                         not isinstance(value, bool))
        if want is int and isinstance(value, bool):
            ok = False
        if not ok:
            raise ConfigError(
                f"{name}.{key}: expected {want.__name__}, "
                f"got {type(value).__name__}")


def parse_run_config(doc):
    """Validate and convert a parsed JSON document into a RunConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    for section in doc:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}")
        _check_section(section, doc[section], _SECTIONS[section])
    for required in ("vit_teacher", "vit_student"):
        if required not in doc:
            raise ConfigError(f"missing required section {required!r}")
    distill_doc = dict(doc.get("distill", {}))
    depth = distill_doc.pop("projector_depth", 4)
    if "lambda" in distill_doc:
        distill_doc["lam"] = distill_doc.pop("lambda")
    return RunConfig(
        vit_teacher=ViTConfig(**doc["vit_teacher"]),
        vit_student=ViTConfig(**doc["vit_student"]),
        distill=DistillConfig(**distill_doc),
        train=TrainConfig(**doc.get("train", {})),
        eval=EvalConfig(**doc.get("eval", {})),
        projector_depth=depth,
    )


def load_run_config(path):
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}") from None
    return parse_run_config(doc)
